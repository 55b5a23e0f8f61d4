use std::fmt;
use std::str::FromStr;

use crate::blocks::{BlockConfig, PeMode};
use crate::error::{Error, Result};
use crate::ordering::{AxisKey, ScanOrder};
use crate::ssm::DEFAULT_N_STATE;
use crate::training::SgdConfig;

/// Downstream task, which fixes the head and the label granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// One label per video.
    Recognition,
    /// One label per frame.
    ActionSegmentation,
    /// One label per point.
    SemanticSegmentation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Recognition, TaskKind::ActionSegmentation, TaskKind::SemanticSegmentation];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Recognition => "recognition",
            TaskKind::ActionSegmentation => "action_segmentation",
            TaskKind::SemanticSegmentation => "semantic_segmentation",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}

/// Backbone and head hyperparameters with optimizer settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Mamba4DConfig {
    pub task: TaskKind,
    pub classes: usize,
    /// Point feature channels of the input videos (0 for coordinates only).
    pub in_channels: usize,
    /// Temporal stride `s_t` between anchor frames.
    pub temporal_stride: usize,
    /// Temporal kernel `k_t`: frames per clip (odd).
    pub temporal_kernel: usize,
    /// Spatial stride `s_s`: one anchor point per `s_s` points.
    pub spatial_stride: usize,
    /// Neighbours `K` gathered per tube frame.
    pub neighbors: usize,
    /// Neighbourhood radius `k_s`.
    pub radius: f64,
    pub d_model: usize,
    pub intra_blocks: usize,
    pub inter_blocks: usize,
    pub n_state: usize,
    pub expand: usize,
    pub conv_width: usize,
    pub intra_order: ScanOrder,
    pub inter_order: ScanOrder,
    pub pe: PeMode,
    /// When false the intra-frame block stack is bypassed.
    pub intra_enabled: bool,
    /// When false the inter-frame block stack is bypassed.
    pub inter_enabled: bool,
    pub optimizer: SgdConfig,
}

impl Default for Mamba4DConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Recognition,
            classes: 2,
            in_channels: 0,
            temporal_stride: 2,
            temporal_kernel: 3,
            spatial_stride: 32,
            neighbors: 32,
            radius: 0.7,
            d_model: 128,
            intra_blocks: 12,
            inter_blocks: 4,
            n_state: DEFAULT_N_STATE,
            expand: 2,
            conv_width: 4,
            intra_order: ScanOrder::UNIDIRECTIONAL,
            inter_order: ScanOrder::cross(AxisKey::Xzy),
            pe: PeMode::SpatioTemporal,
            intra_enabled: true,
            inter_enabled: true,
            optimizer: SgdConfig::default(),
        }
    }
}

impl Mamba4DConfig {
    pub fn block(&self) -> BlockConfig {
        BlockConfig { d_model: self.d_model, expand: self.expand, n_state: self.n_state, conv_width: self.conv_width }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("classes", self.classes),
            ("temporal_stride", self.temporal_stride),
            ("temporal_kernel", self.temporal_kernel),
            ("spatial_stride", self.spatial_stride),
            ("neighbors", self.neighbors),
            ("d_model", self.d_model),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("temporal_kernel must be odd, got {}", self.temporal_kernel)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        self.block().validate()?;
        self.optimizer.validate()
    }
}
