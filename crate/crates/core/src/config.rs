//! Line-based `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear at
//! most once and unknown keys are rejected. `task` is the only required key;
//! everything else falls back to the library defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::blocks::PeMode;
use crate::error::{Error, Result};
use crate::geometry::{read_pcv, PointCloudVideo};
use crate::model::{Mamba4DConfig, TaskKind};
use crate::ordering::ScanOrder;
use crate::training::{generate_synthetic, SyntheticSpec, TrainOptions};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "M4D_SEED";

/// Raw `key -> (value, line)` pairs of a configuration text.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => {
                v.parse().map(Some).map_err(|e| Error::Config(format!("line {line}: bad value for {key}: {e}")))
            }
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on any key that was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(Error::Config(format!("line {line}: unknown key {k:?}"))),
        }
    }
}

/// Comma-separated list wrapper used for list-valued keys.
#[derive(Clone, Debug, PartialEq, Eq)]
struct List(Vec<usize>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Ok(List(Vec::new()));
        }
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"))).collect::<std::result::Result<_, _>>().map(List)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Where training and evaluation videos come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// A `.pcv` file or a directory of them.
    Pcv(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Everything a `train`/`eval`/`ablate` run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: Mamba4DConfig,
    pub train: TrainOptions,
    pub data: DataSource,
    /// Fraction of the videos held out for evaluation (the trailing ones).
    pub holdout: f64,
    /// Frames per test-time clip for recognition (0 scores whole videos).
    pub clip_frames: usize,
    pub out_dir: PathBuf,
}

fn synthetic_keys(kv: &mut KeyValues, prefix: &str, spec: &mut SyntheticSpec) -> Result<()> {
    let k = |name: &str| format!("{prefix}{name}");
    kv.set(&k("seed"), &mut spec.seed)?;
    kv.set(&k("videos"), &mut spec.videos)?;
    kv.set(&k("frames"), &mut spec.frames)?;
    kv.set(&k("points"), &mut spec.points)?;
    kv.set(&k("channels"), &mut spec.channels)?;
    kv.set(&k("blobs"), &mut spec.blobs)?;
    kv.set(&k("blob_std"), &mut spec.blob_std)?;
    kv.set(&k("noise"), &mut spec.noise)?;
    kv.set(&k("angular_speed"), &mut spec.angular_speed)?;
    kv.set(&k("translation_speed"), &mut spec.translation_speed)?;
    kv.set(&k("oscillation_freq"), &mut spec.oscillation_freq)?;
    kv.set(&k("oscillation_amp"), &mut spec.oscillation_amp)?;
    Ok(())
}

fn write_synthetic(out: &mut String, prefix: &str, s: &SyntheticSpec) {
    let _ = writeln!(out, "{prefix}seed = {}", s.seed);
    let _ = writeln!(out, "{prefix}videos = {}", s.videos);
    let _ = writeln!(out, "{prefix}frames = {}", s.frames);
    let _ = writeln!(out, "{prefix}points = {}", s.points);
    let _ = writeln!(out, "{prefix}channels = {}", s.channels);
    let _ = writeln!(out, "{prefix}blobs = {}", s.blobs);
    let _ = writeln!(out, "{prefix}blob_std = {}", s.blob_std);
    let _ = writeln!(out, "{prefix}noise = {}", s.noise);
    let _ = writeln!(out, "{prefix}angular_speed = {}", s.angular_speed);
    let _ = writeln!(out, "{prefix}translation_speed = {}", s.translation_speed);
    let _ = writeln!(out, "{prefix}oscillation_freq = {}", s.oscillation_freq);
    let _ = writeln!(out, "{prefix}oscillation_amp = {}", s.oscillation_amp);
}

/// Parses a synthetic dataset description (`task`, `classes`, `seed`,
/// `videos`, `frames`, `points`, ...). `task` is required.
pub fn parse_synthetic_spec(text: &str) -> Result<SyntheticSpec> {
    let mut kv = KeyValues::parse(text)?;
    let task: TaskKind = kv.take("task")?.ok_or_else(|| Error::Config("missing required key \"task\"".into()))?;
    let mut spec = SyntheticSpec { task, ..SyntheticSpec::default() };
    kv.set("classes", &mut spec.classes)?;
    synthetic_keys(&mut kv, "", &mut spec)?;
    kv.finish()?;
    spec.validate()?;
    Ok(spec)
}

pub fn synthetic_spec_text(spec: &SyntheticSpec) -> String {
    let mut out = format!("task = {}\nclasses = {}\n", spec.task, spec.classes);
    write_synthetic(&mut out, "", spec);
    out
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let task: TaskKind = kv.take("task")?.ok_or_else(|| Error::Config("missing required key \"task\"".into()))?;
        let mut m = Mamba4DConfig { task, ..Mamba4DConfig::default() };
        kv.set("classes", &mut m.classes)?;
        kv.set("in_channels", &mut m.in_channels)?;
        kv.set("temporal_stride", &mut m.temporal_stride)?;
        kv.set("temporal_kernel", &mut m.temporal_kernel)?;
        kv.set("spatial_stride", &mut m.spatial_stride)?;
        kv.set("neighbors", &mut m.neighbors)?;
        kv.set("radius", &mut m.radius)?;
        kv.set("d_model", &mut m.d_model)?;
        kv.set("intra_blocks", &mut m.intra_blocks)?;
        kv.set("inter_blocks", &mut m.inter_blocks)?;
        kv.set("n_state", &mut m.n_state)?;
        kv.set("expand", &mut m.expand)?;
        kv.set("conv_width", &mut m.conv_width)?;
        kv.set::<ScanOrder>("intra_order", &mut m.intra_order)?;
        kv.set::<ScanOrder>("inter_order", &mut m.inter_order)?;
        kv.set::<PeMode>("pe", &mut m.pe)?;
        kv.set("intra_enabled", &mut m.intra_enabled)?;
        kv.set("inter_enabled", &mut m.inter_enabled)?;
        kv.set("lr", &mut m.optimizer.lr)?;
        kv.set("momentum", &mut m.optimizer.momentum)?;
        if let Some(List(v)) = kv.take("decay_epochs")? {
            m.optimizer.decay_epochs = v;
        }
        kv.set("decay_factor", &mut m.optimizer.decay_factor)?;

        let mut train = TrainOptions::default();
        kv.set("epochs", &mut train.epochs)?;
        kv.set("batch_size", &mut train.batch_size)?;
        kv.set("seed", &mut train.seed)?;
        kv.set("class_weights", &mut train.class_weights)?;
        train.stop_at_train_accuracy = kv.take("stop_at_train_accuracy")?;
        train.stop_at_eval_accuracy = kv.take("stop_at_eval_accuracy")?;

        let data = match kv.take::<PathBuf>("data")? {
            Some(p) => DataSource::Pcv(p),
            None => {
                let mut spec = SyntheticSpec { task, classes: m.classes, ..SyntheticSpec::default() };
                synthetic_keys(&mut kv, "synth_", &mut spec)?;
                m.in_channels = spec.channels;
                DataSource::Synthetic(spec)
            }
        };
        let mut holdout = 0.2;
        kv.set("holdout", &mut holdout)?;
        let mut clip_frames = 0;
        kv.set("clip_frames", &mut clip_frames)?;
        let mut out_dir = PathBuf::from("runs/default");
        kv.set("out", &mut out_dir)?;
        kv.finish()?;

        let cfg = Self { model: m, train, data, holdout, clip_frames, out_dir };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::Config(format!("holdout must lie in [0, 1), got {}", self.holdout)));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
            if s.channels != self.model.in_channels {
                return Err(Error::Config("synth_channels and in_channels disagree".into()));
            }
        }
        Ok(())
    }

    /// Loads or generates the configured videos.
    pub fn load_videos(&self) -> Result<Vec<PointCloudVideo>> {
        match &self.data {
            DataSource::Pcv(p) => read_pcv(p),
            DataSource::Synthetic(s) => generate_synthetic(s),
        }
    }

    /// Number of trailing videos held out from `total`.
    pub fn holdout_count(&self, total: usize) -> usize {
        ((total as f64 * self.holdout).round() as usize).min(total.saturating_sub(1))
    }

    /// Applies the seed override from [`SEED_ENV`], if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.train.seed = v.trim().parse().map_err(|e| Error::Config(format!("{SEED_ENV}={v:?}: {e}")))?;
        }
        Ok(())
    }

    /// The effective configuration, with every key spelled out.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("task", m.task.to_string());
        kv("classes", m.classes.to_string());
        kv("in_channels", m.in_channels.to_string());
        kv("temporal_stride", m.temporal_stride.to_string());
        kv("temporal_kernel", m.temporal_kernel.to_string());
        kv("spatial_stride", m.spatial_stride.to_string());
        kv("neighbors", m.neighbors.to_string());
        kv("radius", m.radius.to_string());
        kv("d_model", m.d_model.to_string());
        kv("intra_blocks", m.intra_blocks.to_string());
        kv("inter_blocks", m.inter_blocks.to_string());
        kv("n_state", m.n_state.to_string());
        kv("expand", m.expand.to_string());
        kv("conv_width", m.conv_width.to_string());
        kv("intra_order", m.intra_order.to_string());
        kv("inter_order", m.inter_order.to_string());
        kv("pe", m.pe.to_string());
        kv("intra_enabled", m.intra_enabled.to_string());
        kv("inter_enabled", m.inter_enabled.to_string());
        kv("lr", m.optimizer.lr.to_string());
        kv("momentum", m.optimizer.momentum.to_string());
        kv("decay_epochs", join(&m.optimizer.decay_epochs));
        kv("decay_factor", m.optimizer.decay_factor.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("seed", self.train.seed.to_string());
        kv("class_weights", self.train.class_weights.to_string());
        if let Some(a) = self.train.stop_at_train_accuracy {
            kv("stop_at_train_accuracy", a.to_string());
        }
        if let Some(a) = self.train.stop_at_eval_accuracy {
            kv("stop_at_eval_accuracy", a.to_string());
        }
        kv("holdout", self.holdout.to_string());
        kv("clip_frames", self.clip_frames.to_string());
        kv("out", self.out_dir.display().to_string());
        match &self.data {
            DataSource::Pcv(p) => kv("data", p.display().to_string()),
            DataSource::Synthetic(s) => write_synthetic(&mut out, "synth_", s),
        }
        out
    }
}
