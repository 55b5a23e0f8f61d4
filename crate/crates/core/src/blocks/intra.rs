use rand::Rng;

use super::mamba::{BlockConfig, BlockStack, PROJECTION_INIT_STD};
use super::pe::{PeMode, PositionalEncoder4D};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloudVideo, PointTube, TubeSet};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::ordering::{serialize, ScanOrder};

/// Constant tensors describing a batch of tubes, in scan order.
///
/// Row `((tube * k_t + f) * K + j)` holds neighbour `j` (after intra-frame
/// ordering) of clip frame `f` of `tube`.
#[derive(Clone, Debug)]
pub struct TubeInputs {
    pub tubes: usize,
    pub kernel: usize,
    pub k: usize,
    /// `[tubes * k_t * K, in_dim]` point features (a constant one when the video has none).
    pub feats: Tensor,
    /// `[tubes * k_t * K, 4]` displacements `(dx, dy, dz, dt)` from the anchor.
    pub disp: Tensor,
}

/// Width of the embedder input for a video with `channels` feature channels.
pub fn input_dim(channels: usize) -> usize {
    channels.max(1)
}

impl TubeInputs {
    pub fn new(video: &PointCloudVideo, tubes: &[PointTube], order: ScanOrder) -> Result<Self> {
        let first = tubes.first().ok_or_else(|| Error::invalid("no tubes to encode"))?;
        let kernel = first.frames.len();
        let k = first.frames.first().map_or(0, |f| f.neighbors.len());
        if kernel == 0 || k == 0 {
            return Err(Error::invalid("tubes must have frames and neighbours"));
        }
        let c = video.channels();
        let in_dim = input_dim(c);
        let rows = tubes.len() * kernel * k;
        let mut feats = Vec::with_capacity(rows * in_dim);
        let mut disp = Vec::with_capacity(rows * 4);
        for tube in tubes {
            if tube.frames.len() != kernel || tube.frames.iter().any(|f| f.neighbors.len() != k) {
                return Err(Error::invalid("tubes in a batch must share their shape"));
            }
            for (f, tf) in tube.frames.iter().enumerate() {
                let offsets: Vec<[f64; 4]> = (0..k).map(|j| tube.displacement(video, f, j)).collect();
                let xyz: Vec<Point3> = offsets.iter().map(|o| [o[0], o[1], o[2]]).collect();
                let ser = serialize(&[xyz], order)?;
                for &j in &ser.permutation {
                    disp.extend_from_slice(&offsets[j]);
                    if c == 0 {
                        feats.push(1.0);
                    } else {
                        feats.extend_from_slice(video.feature(tf.frame, tf.neighbors[j]));
                    }
                }
            }
        }
        Ok(Self {
            tubes: tubes.len(),
            kernel,
            k,
            feats: Tensor::new([rows, in_dim], feats)?,
            disp: Tensor::new([rows, 4], disp)?,
        })
    }

    pub fn from_set(video: &PointCloudVideo, set: &TubeSet, order: ScanOrder) -> Result<Self> {
        Self::new(video, &set.tubes, order)
    }
}

/// Per-tube encoder: embed every neighbour, add its displacement encoding, run
/// the block stack over each tube frame, then max-pool over neighbours and over
/// clip frames.
#[derive(Clone, Debug)]
pub struct IntraFrameEncoder {
    pub in_dim: usize,
    pub d: usize,
    pub order: ScanOrder,
    /// When false the block stack is skipped (the embedding and pooling still run).
    pub enabled: bool,
    pub w_embed: ParamId,
    pub b_embed: ParamId,
    pub pe: PositionalEncoder4D,
    pub blocks: BlockStack,
}

impl IntraFrameEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        depth: usize,
        block: BlockConfig,
        pe_mode: PeMode,
        order: ScanOrder,
        rng: &mut R,
    ) -> Result<Self> {
        let d = block.d_model;
        Ok(Self {
            in_dim,
            d,
            order,
            enabled: true,
            w_embed: store.add(format!("{prefix}/embed.w"), Tensor::randn([in_dim, d], PROJECTION_INIT_STD, rng))?,
            b_embed: store.add(format!("{prefix}/embed.b"), Tensor::zeros([d]))?,
            pe: PositionalEncoder4D::new(store, &format!("{prefix}/pe"), d, pe_mode, rng)?,
            blocks: BlockStack::new(store, prefix, depth, block, rng)?,
        })
    }

    pub fn prepare(&self, video: &PointCloudVideo, set: &TubeSet) -> Result<TubeInputs> {
        TubeInputs::from_set(video, set, self.order)
    }

    /// Encodes a batch of tubes into `[tubes, d]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, inputs: &TubeInputs) -> Result<Var> {
        if inputs.feats.last_dim() != self.in_dim {
            return Err(Error::shape(format!(
                "encoder expects {} feature channels, got {}",
                self.in_dim,
                inputs.feats.last_dim()
            )));
        }
        let s = inputs.tubes * inputs.kernel;
        let f = tape.constant(inputs.feats.clone());
        let w = tape.param(store, self.w_embed);
        let x = tape.matmul(f, w)?;
        let b = tape.param(store, self.b_embed);
        let x = tape.add_bias(x, b)?;
        let x = self.pe.add_to(tape, store, x, &inputs.disp)?;
        let mut x = tape.reshape(x, [s, inputs.k, self.d])?;
        if self.enabled {
            x = self.blocks.forward(tape, store, x)?;
        }
        let per_frame = tape.max_pool(x, 1)?;
        let per_frame = tape.reshape(per_frame, [inputs.tubes, inputs.kernel, self.d])?;
        let pooled = tape.max_pool(per_frame, 1)?;
        tape.reshape(pooled, [inputs.tubes, self.d])
    }

    /// Encodes a single tube into a `[1, d]` token.
    pub fn encode_tube(&self, tape: &mut Tape, store: &ParamStore, video: &PointCloudVideo, tube: &PointTube) -> Result<Var> {
        let inputs = TubeInputs::new(video, std::slice::from_ref(tube), self.order)?;
        self.forward(tape, store, &inputs)
    }
}

/// Channel-wise maximum over the rows of a `[k_t, d]` tensor.
pub fn temporal_max_pool(per_frame: &Tensor) -> Result<Vec<f64>> {
    if per_frame.rank() != 2 {
        return Err(Error::shape(format!("expected [k_t, d], got {:?}", per_frame.shape())));
    }
    let d = per_frame.last_dim();
    let mut out = per_frame.row(0).to_vec();
    for r in 1..per_frame.rows() {
        for (o, &v) in out.iter_mut().zip(per_frame.row(r)) {
            *o = o.max(v);
        }
    }
    debug_assert_eq!(out.len(), d);
    Ok(out)
}
