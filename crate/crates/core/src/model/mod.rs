//! Full backbone, task heads and losses.

mod backbone;
mod config;
mod heads;
mod loss;

pub use backbone::{targets_for, InterFrameEncoder, InterInputs, Mamba4D, PreparedVideo};
pub use config::{Mamba4DConfig, TaskKind};
pub use heads::{
    classify_video, frame_slots, point_interpolation, segment_frames, segment_points, TaskHead,
    INTERPOLATION_EPS, INTERPOLATION_NEIGHBORS,
};
pub use loss::{inverse_frequency_weights, softmax_rows};
