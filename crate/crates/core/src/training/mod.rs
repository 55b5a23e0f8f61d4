//! Optimizer, synthetic data, evaluation metrics and the training loop.

mod metrics;
mod sgd;
mod synthetic;
mod trainer;

pub use metrics::{accuracy, class_iou, edit_score, mean_iou, segmental_f1, segments, F1_THRESHOLDS};
pub use sgd::{SgdConfig, SgdState};
pub use synthetic::{generate_recognition_video, generate_synthetic, generate_video, Motion, SyntheticSpec};
pub use trainer::{
    evaluate, mean_loss, metric_line, metric_value, predict_labels, task_metrics, train, EpochReport, Metrics,
    TrainOptions, TrainReport,
};
