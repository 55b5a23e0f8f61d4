//! Spatio-temporal state-space backbone for point cloud videos.
//!
//! A video is cut into short clips around strided anchor frames. Each clip is
//! split into point tubes (radius-bounded neighbourhoods of farthest-point
//! anchors), every tube frame is encoded by a stack of selective state-space
//! blocks and max-pooled over space and time, and the resulting tokens are
//! serialized into one sequence for a second block stack that models
//! long-range temporal structure.

pub mod blocks;
pub mod config;
pub mod error;
pub mod geometry;
pub mod model;
pub mod numerics;
pub mod ordering;
pub mod scaling;
pub mod ssm;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use numerics::{ParamId, ParamStore, Tape, Tensor, Var};
