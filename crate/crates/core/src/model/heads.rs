use std::sync::Arc;

use rand::Rng;

use super::config::TaskKind;
use crate::blocks::PROJECTION_INIT_STD;
use crate::error::{Error, Result};
use crate::geometry::{dist2, PointCloudVideo, TubeSet};
use crate::numerics::{ParamId, ParamStore, RowMix, Tape, Tensor, Var};

/// Inverse-distance interpolation uses this many nearest anchors.
pub const INTERPOLATION_NEIGHBORS: usize = 3;
pub const INTERPOLATION_EPS: f64 = 1e-8;

/// Linear classifier applied after task-specific pooling.
#[derive(Clone, Debug)]
pub struct TaskHead {
    pub kind: TaskKind,
    pub d: usize,
    pub classes: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        kind: TaskKind,
        d: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("a head needs at least one class".into()));
        }
        Ok(Self {
            kind,
            d,
            classes,
            w: store.add(format!("{prefix}/w"), Tensor::randn([d, classes], PROJECTION_INIT_STD, rng))?,
            b: store.add(format!("{prefix}/b"), Tensor::zeros([classes]))?,
        })
    }

    /// `[rows, d] -> [rows, classes]`.
    pub fn project(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let y = tape.matmul(x, w)?;
        let b = tape.param(store, self.b);
        tape.add_bias(y, b)
    }
}

/// Global max-pool over all `F * n` tokens followed by the head: `[1, classes]`.
pub fn classify_video(tape: &mut Tape, store: &ParamStore, head: &TaskHead, features: Var) -> Result<Var> {
    let pooled = tape.max_pool(features, 0)?;
    let pooled = tape.reshape(pooled, [1, head.d])?;
    head.project(tape, store, pooled)
}

/// Anchor slot that supplies frame `t`: the anchor whose stride window holds it,
/// i.e. the nearest anchor with ties going to the later one.
pub fn frame_slots(frames: usize, temporal_stride: usize, anchor_frames: usize) -> Vec<usize> {
    (0..frames).map(|t| (t / temporal_stride.max(1)).min(anchor_frames.saturating_sub(1))).collect()
}

/// Per-anchor-frame max-pool, head, then replication to every frame: `[T, classes]`.
pub fn segment_frames(
    tape: &mut Tape,
    store: &ParamStore,
    head: &TaskHead,
    features: Var,
    per_frame: usize,
    slots: &[usize],
) -> Result<Var> {
    let rows = tape.shape(features)[0];
    if per_frame == 0 || !rows.is_multiple_of(per_frame) {
        return Err(Error::shape(format!("{rows} tokens are not a multiple of {per_frame}")));
    }
    let f = rows / per_frame;
    if slots.iter().any(|&s| s >= f) {
        return Err(Error::invalid("frame slot beyond the anchor frames"));
    }
    let x = tape.reshape(features, [f, per_frame, head.d])?;
    let pooled = tape.max_pool(x, 1)?;
    let pooled = tape.reshape(pooled, [f, head.d])?;
    let logits = head.project(tape, store, pooled)?;
    tape.gather_rows(logits, slots)
}

/// Interpolation weights from anchor tokens to every original point: each
/// point mixes the 3 nearest anchors of its anchor frame with weights
/// `1 / (dist^2 + eps)`, normalised. A point that coincides with an anchor takes
/// that anchor alone.
pub fn point_interpolation(video: &PointCloudVideo, set: &TubeSet, slots: &[usize]) -> Result<RowMix> {
    if slots.len() != video.frames() {
        return Err(Error::shape("one anchor slot per frame is required"));
    }
    let n = set.per_frame;
    let mut rows = Vec::with_capacity(video.frames() * video.points_per_frame());
    for (t, &slot) in slots.iter().enumerate() {
        let anchors: Vec<_> = set.tubes[slot * n..(slot + 1) * n].iter().map(|tb| tb.anchor_xyz).collect();
        for &p in video.frame(t) {
            let mut near: Vec<(f64, usize)> = anchors.iter().enumerate().map(|(i, &a)| (dist2(p, a), i)).collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(INTERPOLATION_NEIGHBORS);
            let row = if near[0].0 == 0.0 {
                vec![(slot * n + near[0].1, 1.0)]
            } else {
                let w: Vec<f64> = near.iter().map(|(d2, _)| 1.0 / (d2 + INTERPOLATION_EPS)).collect();
                let z: f64 = w.iter().sum();
                near.iter().zip(&w).map(|(&(_, i), wi)| (slot * n + i, wi / z)).collect()
            };
            rows.push(row);
        }
    }
    Ok(RowMix { rows })
}

/// Interpolates anchor features to every point, then applies the head: `[T, N, classes]`.
pub fn segment_points(
    tape: &mut Tape,
    store: &ParamStore,
    head: &TaskHead,
    features: Var,
    mix: Arc<RowMix>,
    frames: usize,
    points: usize,
) -> Result<Var> {
    if mix.rows.len() != frames * points {
        return Err(Error::shape("interpolation rows do not match the video"));
    }
    let x = tape.mix_rows(features, mix)?;
    let logits = head.project(tape, store, x)?;
    tape.reshape(logits, [frames, points, head.classes])
}
