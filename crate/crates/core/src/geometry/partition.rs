use crate::error::{Error, Result};

/// Anchor frames and the clamped `k_t`-frame clip around each of them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipPartition {
    pub stride: usize,
    pub kernel: usize,
    pub anchors: Vec<usize>,
    pub clips: Vec<Vec<usize>>,
}

/// `floor(T / s_t)` anchors at `k * s_t + floor(s_t / 2)`.
pub fn select_anchor_frames(frames: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || stride > frames {
        return Err(Error::invalid(format!("temporal stride {stride} for {frames} frames")));
    }
    Ok((0..frames / stride).map(|k| k * stride + stride / 2).collect())
}

/// Clip of `k_t` frames centred on every anchor; indices outside `[0, T)` are clamped.
pub fn build_clips(anchors: &[usize], kernel: usize, frames: usize) -> Result<ClipPartition> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid(format!("temporal kernel must be odd, got {kernel}")));
    }
    if let Some(&a) = anchors.iter().find(|&&a| a >= frames) {
        return Err(Error::invalid(format!("anchor frame {a} outside {frames} frames")));
    }
    let half = (kernel / 2) as isize;
    let last = frames as isize - 1;
    let clips = anchors
        .iter()
        .map(|&a| (-half..=half).map(|o| (a as isize + o).clamp(0, last) as usize).collect())
        .collect();
    let stride = match anchors {
        [a, b, ..] => b - a,
        _ => 0,
    };
    Ok(ClipPartition { stride, kernel, anchors: anchors.to_vec(), clips })
}

/// Anchor selection followed by clip construction.
pub fn partition(frames: usize, stride: usize, kernel: usize) -> Result<ClipPartition> {
    let anchors = select_anchor_frames(frames, stride)?;
    let mut p = build_clips(&anchors, kernel, frames)?;
    p.stride = stride;
    Ok(p)
}
