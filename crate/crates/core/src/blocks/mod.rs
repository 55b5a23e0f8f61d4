//! Selective state-space blocks and the per-tube encoder built from them.

mod intra;
mod mamba;
mod pe;

pub use intra::{input_dim, temporal_max_pool, IntraFrameEncoder, TubeInputs};
pub use mamba::{BlockConfig, BlockStack, MambaBlock, PROJECTION_INIT_STD};
pub use pe::{PeMode, PositionalEncoder4D};
