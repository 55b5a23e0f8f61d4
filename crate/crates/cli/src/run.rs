//! `train`, `eval` and `gen`, plus the fitting helper shared with `ablate`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;

use m4d_core::config::{parse_synthetic_spec, RunConfig, SEED_ENV};
use m4d_core::geometry::{read_pcv, write_pcv_file, Labels, PointCloudVideo};
use m4d_core::model::{targets_for, Mamba4D, PreparedVideo, TaskKind};
use m4d_core::numerics::{load_checkpoint_into, save_checkpoint};
use m4d_core::training::{evaluate, generate_synthetic, metric_line, task_metrics, train as train_model, EpochReport, Metrics, TrainReport};
use m4d_core::ParamStore;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.log";
pub const CONFIG_FILE: &str = "config.txt";

/// The metric an ablation row or a summary ranks by.
pub fn primary_metric(task: TaskKind) -> &'static str {
    match task {
        TaskKind::SemanticSegmentation => "miou",
        _ => "accuracy",
    }
}

/// Reads a run config and applies the environment seed override.
pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

pub fn prepare_all(model: &Mamba4D, videos: &[PointCloudVideo]) -> anyhow::Result<Vec<PreparedVideo>> {
    Ok(videos.par_iter().map(|v| model.prepare(v)).collect::<m4d_core::Result<_>>()?)
}

/// A trained model with its report.
pub struct Fit {
    pub model: Mamba4D,
    pub store: ParamStore,
    pub report: TrainReport,
}

/// Initializes from `cfg.train.seed`, trains on the leading videos and holds
/// out the trailing `cfg.holdout` fraction.
pub fn fit(
    cfg: &RunConfig,
    videos: &[PointCloudVideo],
    on_epoch: impl FnMut(&EpochReport) -> m4d_core::Result<()>,
) -> anyhow::Result<Fit> {
    let (model, mut store) = Mamba4D::init(cfg.model.clone(), cfg.train.seed)?;
    let prep = prepare_all(&model, videos)?;
    let held = cfg.holdout_count(prep.len());
    let (tr, te) = prep.split_at(prep.len() - held);
    let report = train_model(&model, &mut store, tr, (!te.is_empty()).then_some(te), &cfg.train, on_epoch)?;
    Ok(Fit { model, store, report })
}

fn epoch_lines(r: &EpochReport) -> Vec<String> {
    let mut lines = vec![metric_line("loss", r.loss, r.epoch), metric_line("lr", r.lr, r.epoch)];
    lines.extend(r.train.iter().map(|(k, v)| metric_line(&format!("train_{k}"), *v, r.epoch)));
    if let Some(eval) = &r.eval {
        lines.extend(eval.iter().map(|(k, v)| metric_line(k, *v, r.epoch)));
    }
    lines
}

pub fn train(config: &Path, out_dir: Option<PathBuf>, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    let videos = cfg.load_videos().context("loading training data")?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join(CONFIG_FILE), cfg.to_text())?;
    let mut log = BufWriter::new(File::create(cfg.out_dir.join(METRICS_FILE))?);
    let fit = fit(&cfg, &videos, |r| {
        for line in epoch_lines(r) {
            writeln!(log, "{line}")?;
        }
        Ok(log.flush()?)
    })?;
    save_checkpoint(&fit.store, cfg.out_dir.join(CHECKPOINT_FILE))?;
    if let Some(last) = fit.report.last() {
        match &last.eval {
            Some(eval) => eval.iter().try_for_each(|(k, v)| writeln!(out, "{}", metric_line(k, *v, last.epoch)))?,
            None => last
                .train
                .iter()
                .try_for_each(|(k, v)| writeln!(out, "{}", metric_line(&format!("train_{k}"), *v, last.epoch)))?,
        }
    }
    writeln!(out, "checkpoint={}", cfg.out_dir.join(CHECKPOINT_FILE).display())?;
    Ok(())
}

/// Task metrics of a trained model on `videos`; recognition with
/// `clip_frames > 0` averages clip probabilities per video.
pub fn score(model: &Mamba4D, store: &ParamStore, clip_frames: usize, videos: &[PointCloudVideo]) -> anyhow::Result<Metrics> {
    let cfg = &model.config;
    if cfg.task == TaskKind::Recognition && clip_frames > 0 {
        let preds: Vec<Vec<usize>> = videos
            .par_iter()
            .map(|v| {
                let p = model.predict_clip_average(store, v, clip_frames)?;
                let best = p.iter().enumerate().fold(0, |b, (i, &x)| if x > p[b] { i } else { b });
                Ok(vec![best])
            })
            .collect::<m4d_core::Result<_>>()?;
        let truths = videos.iter().map(|v| targets_for(cfg.task, v)).collect::<m4d_core::Result<Vec<_>>>()?;
        return Ok(task_metrics(cfg.task, cfg.classes, &preds, &truths)?);
    }
    Ok(evaluate(model, store, &prepare_all(model, videos)?)?)
}

pub fn eval(ckpt: &Path, data: &Path, config: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<()> {
    let config_path = match config {
        Some(p) => p.to_path_buf(),
        None => ckpt.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE),
    };
    let cfg = load_config(&config_path)?;
    let (model, mut store) = Mamba4D::init(cfg.model.clone(), 0)?;
    load_checkpoint_into(&mut store, ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let videos = read_pcv(data).with_context(|| format!("reading {}", data.display()))?;
    if videos.iter().any(|v| matches!(v.labels(), Labels::None)) {
        bail!("{} has unlabeled videos", data.display());
    }
    for (k, v) in score(&model, &store, cfg.clip_frames, &videos)? {
        writeln!(out, "{}", metric_line(&k, v, cfg.train.epochs))?;
    }
    Ok(())
}

pub fn gen(spec: &Path, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let mut spec = parse_synthetic_spec(&text)?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        spec.seed = v.trim().parse().map_err(|e| m4d_core::Error::Config(format!("{SEED_ENV}={v:?}: {e}")))?;
    }
    let videos = generate_synthetic(&spec)?;
    write_pcv_file(&videos, path)?;
    writeln!(out, "videos={} path={}", videos.len(), path.display())?;
    Ok(())
}
