//! Dense tensors and reverse-mode differentiation.

mod checkpoint;
pub(crate) mod fastmath;
mod linalg;
pub mod ops;
mod tape;
mod tensor;

pub use checkpoint::{
    load_checkpoint_into, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use ops::{depthwise_conv1d, layer_norm, silu, RowMix, LAYER_NORM_EPS};
pub use tape::{Backward, BackwardCtx, Gradients, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;

pub(crate) use linalg::matmul;

/// `c = a * b^T` for row-major `a [m,k]`, `b [n,k]`.
pub(crate) fn linalg_gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    linalg::gemm(m, k, n, a, linalg::Layout::Normal, b, linalg::Layout::Transposed, c, 0.0);
}
pub(crate) use ops::seq_dims;
