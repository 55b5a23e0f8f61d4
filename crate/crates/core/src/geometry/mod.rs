//! Anchor frames, farthest point sampling, radius-bounded KNN and point tubes.

mod partition;
mod pcv;
mod sampling;
mod tubes;
mod video;

pub use partition::{build_clips, partition, select_anchor_frames, ClipPartition};
pub use pcv::{parse_pcv, read_pcv, write_pcv, write_pcv_file};
pub use sampling::{farthest_point_sampling, knn_radius, Neighbors};
pub use tubes::{build_point_tubes, tubes_are_local, PointTube, TubeFrame, TubeSet};
pub use video::{dist2, LabelKind, Labels, Point3, PointCloudVideo};

#[cfg(test)]
mod tests;
