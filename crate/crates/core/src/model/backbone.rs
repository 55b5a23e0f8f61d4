use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Mamba4DConfig, TaskKind};
use super::heads::{classify_video, frame_slots, point_interpolation, segment_frames, segment_points, TaskHead};
use super::loss::softmax_rows;
use crate::blocks::{input_dim, BlockStack, IntraFrameEncoder, PeMode, PositionalEncoder4D, TubeInputs};
use crate::error::{Error, Result};
use crate::geometry::{build_point_tubes, partition, Labels, PointCloudVideo, TubeSet};
use crate::numerics::{ParamStore, RowMix, Tape, Tensor, Var};
use crate::ordering::{serialize, ScanOrder, ScanStrategy, Serialization};

/// Block stack over all anchor tokens of a video, run in serialized order.
#[derive(Clone, Debug)]
pub struct InterFrameEncoder {
    pub order: ScanOrder,
    /// When false the block stack is bypassed (the positional term is still added).
    pub enabled: bool,
    pub pe: PositionalEncoder4D,
    pub blocks: BlockStack,
}

/// Constants consumed by [`InterFrameEncoder::forward`].
#[derive(Clone, Debug)]
pub struct InterInputs {
    /// `[F * n, 4]` anchor `(x, y, z, t)` with `t` the anchor frame index.
    pub anchor_pos: Tensor,
    pub serialization: Serialization,
}

impl InterInputs {
    pub fn new(set: &TubeSet, order: ScanOrder) -> Result<Self> {
        let mut pos = Vec::with_capacity(set.tubes.len() * 4);
        for tube in &set.tubes {
            pos.extend_from_slice(&tube.anchor_xyz);
            pos.push(tube.anchor_frame as f64);
        }
        let coords = set.anchor_coords();
        let frames: Vec<_> = coords.chunks(set.per_frame).map(<[_]>::to_vec).collect();
        Ok(Self { anchor_pos: Tensor::new([set.tubes.len(), 4], pos)?, serialization: serialize(&frames, order)? })
    }
}

impl InterFrameEncoder {
    /// `[F * n, d]` tokens in, `[F * n, d]` tokens out, in token order.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, tokens: Var, inputs: &InterInputs) -> Result<Var> {
        let x = self.pe.add_to(tape, store, tokens, &inputs.anchor_pos)?;
        if !self.enabled || self.blocks.is_empty() {
            return Ok(x);
        }
        let shape = tape.shape(x).to_vec();
        let permute = self.order.strategy() != ScanStrategy::Unidirectional;
        let seq = if permute { tape.gather_rows(x, &inputs.serialization.permutation)? } else { x };
        let seq = tape.reshape(seq, [1, shape[0], shape[1]])?;
        let seq = self.blocks.forward(tape, store, seq)?;
        let seq = tape.reshape(seq, shape)?;
        if permute {
            tape.gather_rows(seq, &inputs.serialization.inverse)
        } else {
            Ok(seq)
        }
    }
}

/// Geometry and constants derived from one video, reusable across epochs.
#[derive(Clone, Debug)]
pub struct PreparedVideo {
    pub frames: usize,
    pub points: usize,
    pub tubes: TubeSet,
    pub intra: TubeInputs,
    pub inter: InterInputs,
    /// Anchor slot feeding each frame.
    pub frame_slots: Vec<usize>,
    /// Anchor-to-point interpolation, for point segmentation only.
    pub point_mix: Option<Arc<RowMix>>,
    /// Training targets in logit-row order; empty when the video is unlabeled.
    pub targets: Vec<usize>,
}

/// Point-tube backbone with intra-frame and inter-frame block stacks and a task head.
#[derive(Clone, Debug)]
pub struct Mamba4D {
    pub config: Mamba4DConfig,
    pub intra: IntraFrameEncoder,
    pub inter: InterFrameEncoder,
    pub head: TaskHead,
}

/// Targets for `task` from the labels of `video`; empty for unlabeled videos.
pub fn targets_for(task: TaskKind, video: &PointCloudVideo) -> Result<Vec<usize>> {
    let mismatch = |kind: &str| Error::invalid(format!("{task} needs {kind} labels, video has {}", video.labels().kind().as_str()));
    Ok(match (task, video.labels()) {
        (_, Labels::None) => Vec::new(),
        (TaskKind::Recognition, Labels::Video(c)) => vec![*c as usize],
        (TaskKind::ActionSegmentation, Labels::Frame(l)) => l.iter().map(|&c| c as usize).collect(),
        (TaskKind::SemanticSegmentation, Labels::Point(l)) => l.iter().map(|&c| c as usize).collect(),
        (TaskKind::Recognition, _) => return Err(mismatch("video")),
        (TaskKind::ActionSegmentation, _) => return Err(mismatch("frame")),
        (TaskKind::SemanticSegmentation, _) => return Err(mismatch("point")),
    })
}

impl Mamba4D {
    /// Registers all parameters in `store`.
    pub fn new<R: Rng + ?Sized>(config: Mamba4DConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let block = config.block();
        let mut intra = IntraFrameEncoder::new(
            store,
            "intra",
            input_dim(config.in_channels),
            config.intra_blocks,
            block,
            config.pe,
            config.intra_order,
            rng,
        )?;
        intra.enabled = config.intra_enabled;
        let inter = InterFrameEncoder {
            order: config.inter_order,
            enabled: config.inter_enabled,
            pe: PositionalEncoder4D::new(store, "inter/pe", config.d_model, config.pe, rng)?,
            blocks: BlockStack::new(store, "inter", config.inter_blocks, block, rng)?,
        };
        let head = TaskHead::new(store, "head", config.task, config.d_model, config.classes, rng)?;
        Ok(Self { config, intra, inter, head })
    }

    /// Builds a model and its parameters from a seed.
    pub fn init(config: Mamba4DConfig, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Self::new(config, &mut store, &mut rng)?;
        Ok((model, store))
    }

    pub fn pe_mode(&self) -> PeMode {
        self.config.pe
    }

    pub fn prepare(&self, video: &PointCloudVideo) -> Result<PreparedVideo> {
        let c = &self.config;
        if video.channels() != c.in_channels {
            return Err(Error::shape(format!(
                "model expects {} feature channels, video has {}",
                c.in_channels,
                video.channels()
            )));
        }
        let part = partition(video.frames(), c.temporal_stride, c.temporal_kernel)?;
        let tubes = build_point_tubes(video, &part, c.spatial_stride, c.neighbors, c.radius)?;
        let intra = self.intra.prepare(video, &tubes)?;
        let inter = InterInputs::new(&tubes, c.inter_order)?;
        let slots = frame_slots(video.frames(), c.temporal_stride, tubes.anchor_frames);
        let point_mix = match c.task {
            TaskKind::SemanticSegmentation => Some(Arc::new(point_interpolation(video, &tubes, &slots)?)),
            _ => None,
        };
        let targets = targets_for(c.task, video)?;
        if let Some(&bad) = targets.iter().find(|&&t| t >= c.classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {} classes", c.classes)));
        }
        Ok(PreparedVideo {
            frames: video.frames(),
            points: video.points_per_frame(),
            tubes,
            intra,
            inter,
            frame_slots: slots,
            point_mix,
            targets,
        })
    }

    /// Anchor tokens after both encoders: `[F * n, d]`, anchor-frame major.
    pub fn features(&self, tape: &mut Tape, store: &ParamStore, prep: &PreparedVideo) -> Result<Var> {
        let tokens = self.intra.forward(tape, store, &prep.intra)?;
        self.inter.forward(tape, store, tokens, &prep.inter)
    }

    /// Task logits: `[1, C]`, `[T, C]` or `[T, N, C]`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, prep: &PreparedVideo) -> Result<Var> {
        let feats = self.features(tape, store, prep)?;
        match self.config.task {
            TaskKind::Recognition => classify_video(tape, store, &self.head, feats),
            TaskKind::ActionSegmentation => {
                segment_frames(tape, store, &self.head, feats, prep.tubes.per_frame, &prep.frame_slots)
            }
            TaskKind::SemanticSegmentation => {
                let mix = prep.point_mix.clone().ok_or_else(|| Error::invalid("video prepared without interpolation"))?;
                segment_points(tape, store, &self.head, feats, mix, prep.frames, prep.points)
            }
        }
    }

    /// Cross-entropy of the task logits against the prepared targets.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, prep: &PreparedVideo, weights: Option<&[f64]>) -> Result<Var> {
        if prep.targets.is_empty() {
            return Err(Error::invalid("cannot compute a loss on an unlabeled video"));
        }
        let logits = self.logits(tape, store, prep)?;
        tape.cross_entropy(logits, &prep.targets, weights)
    }

    /// Class probabilities, one row per logit row.
    pub fn predict(&self, store: &ParamStore, prep: &PreparedVideo) -> Result<Tensor> {
        let mut tape = Tape::new();
        let logits = self.logits(&mut tape, store, prep)?;
        let v = tape.value(logits);
        let c = self.config.classes;
        softmax_rows(v).reshape([v.numel() / c, c])
    }

    /// Video-level probabilities averaged over consecutive clips of `clip_frames`
    /// frames (the trailing clip is aligned to the last frame). `clip_frames == 0`
    /// or a clip at least as long as the video scores the whole video once.
    pub fn predict_clip_average(&self, store: &ParamStore, video: &PointCloudVideo, clip_frames: usize) -> Result<Vec<f64>> {
        if self.config.task != TaskKind::Recognition {
            return Err(Error::invalid("clip averaging applies to video-level recognition"));
        }
        let t = video.frames();
        let starts: Vec<usize> = if clip_frames == 0 || clip_frames >= t {
            vec![0]
        } else {
            let mut s: Vec<usize> = (0..=t - clip_frames).step_by(clip_frames).collect();
            if s.last() != Some(&(t - clip_frames)) {
                s.push(t - clip_frames);
            }
            s
        };
        let mut avg = vec![0.0; self.config.classes];
        for &s in &starts {
            let clip = if starts.len() == 1 && s == 0 { video.clone() } else { video.slice_frames(s, clip_frames)? };
            let p = self.predict(store, &self.prepare(&clip)?)?;
            avg.iter_mut().zip(p.data()).for_each(|(a, v)| *a += v / starts.len() as f64);
        }
        Ok(avg)
    }
}
