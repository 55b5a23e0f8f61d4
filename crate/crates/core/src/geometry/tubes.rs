use super::partition::ClipPartition;
use super::sampling::{farthest_point_sampling, knn_radius};
use super::video::{dist2, Point3, PointCloudVideo};
use crate::error::{Error, Result};

/// One clip frame of a point tube.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeFrame {
    /// Video frame index.
    pub frame: usize,
    /// Frame offset from the anchor frame.
    pub dt: isize,
    /// `K` point indices into `frame`.
    pub neighbors: Vec<usize>,
    /// Leading neighbours that are distinct points within the radius.
    pub within: usize,
}

/// Spatio-temporal neighbourhood of one anchor point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTube {
    /// Position of the anchor frame in the partition.
    pub anchor_slot: usize,
    pub anchor_frame: usize,
    pub anchor_point: usize,
    pub anchor_xyz: Point3,
    /// One entry per clip frame, in clip order.
    pub frames: Vec<TubeFrame>,
}

impl PointTube {
    /// `(dx, dy, dz, dt)` of neighbour `j` in clip frame `f`.
    pub fn displacement(&self, video: &PointCloudVideo, f: usize, j: usize) -> [f64; 4] {
        let tf = &self.frames[f];
        let p = video.point(tf.frame, tf.neighbors[j]);
        let a = self.anchor_xyz;
        [p[0] - a[0], p[1] - a[1], p[2] - a[2], tf.dt as f64]
    }

    pub fn neighbor_count(&self) -> usize {
        self.frames.iter().map(|f| f.neighbors.len()).sum()
    }
}

/// Point tubes of a video, anchor-frame major: tube `f * per_frame + i` is the
/// `i`-th FPS anchor of anchor frame `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeSet {
    pub tubes: Vec<PointTube>,
    pub anchor_frames: usize,
    pub per_frame: usize,
}

impl TubeSet {
    pub fn anchor_coords(&self) -> Vec<Point3> {
        self.tubes.iter().map(|t| t.anchor_xyz).collect()
    }
}

/// Samples `floor(N / s_s)` FPS anchors in every anchor frame (independently per
/// frame) and gathers their radius-`k_s` neighbours in each clip frame.
pub fn build_point_tubes(
    video: &PointCloudVideo,
    partition: &ClipPartition,
    spatial_stride: usize,
    k: usize,
    radius: f64,
) -> Result<TubeSet> {
    if spatial_stride == 0 {
        return Err(Error::invalid("spatial stride must be positive"));
    }
    let per_frame = video.points_per_frame() / spatial_stride;
    if per_frame == 0 {
        return Err(Error::invalid(format!(
            "spatial stride {spatial_stride} leaves no anchors among {} points",
            video.points_per_frame()
        )));
    }
    let mut tubes = Vec::with_capacity(partition.anchors.len() * per_frame);
    for (slot, (&anchor, clip)) in partition.anchors.iter().zip(&partition.clips).enumerate() {
        if clip.iter().any(|&f| f >= video.frames()) {
            return Err(Error::invalid("clip frame outside the video"));
        }
        let frame_points = video.frame(anchor);
        for idx in farthest_point_sampling(frame_points, per_frame)? {
            let xyz = frame_points[idx];
            let frames = clip
                .iter()
                .map(|&f| {
                    let nb = knn_radius(xyz, video.frame(f), k, radius)?;
                    Ok(TubeFrame {
                        frame: f,
                        dt: f as isize - anchor as isize,
                        neighbors: nb.indices,
                        within: nb.within,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            tubes.push(PointTube { anchor_slot: slot, anchor_frame: anchor, anchor_point: idx, anchor_xyz: xyz, frames });
        }
    }
    Ok(TubeSet { tubes, anchor_frames: partition.anchors.len(), per_frame })
}

/// Checks that every non-padded neighbour lies within `radius` of its anchor.
pub fn tubes_are_local(video: &PointCloudVideo, set: &TubeSet, radius: f64) -> bool {
    set.tubes.iter().all(|t| {
        t.frames.iter().all(|tf| {
            tf.neighbors[..tf.within]
                .iter()
                .all(|&j| dist2(video.point(tf.frame, j), t.anchor_xyz) <= radius * radius)
        })
    })
}
