//! `ablate`: one training run per row of an ablation table.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};

use m4d_core::blocks::PeMode;
use m4d_core::config::RunConfig;
use m4d_core::ordering::ScanOrder;
use m4d_core::training::metric_value;

use crate::run::{fit, load_config, primary_metric};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Intra/inter modules on or off (4 rows).
    Modules,
    /// Intra x inter block counts (4 rows).
    Blocks,
    /// Positional encoding none / 3d / 4d (3 rows).
    Pe,
    /// 10 intra-frame orders, then 19 inter-frame orders.
    Order,
    /// Temporal kernel sweep, then spatial radius sweep.
    StrideRadius,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] =
        [AblationAxis::Modules, AblationAxis::Blocks, AblationAxis::Pe, AblationAxis::Order, AblationAxis::StrideRadius];

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Modules => "modules",
            AblationAxis::Blocks => "blocks",
            AblationAxis::Pe => "pe",
            AblationAxis::Order => "order",
            AblationAxis::StrideRadius => "stride_radius",
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        AblationAxis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            anyhow!("unknown ablation axis {s:?} (expected modules, blocks, pe, order or stride_radius)")
        })
    }
}

/// Temporal kernels swept by `stride_radius`.
pub const KERNEL_SWEEP: [usize; 4] = [1, 3, 5, 7];
/// Spatial radii swept by `stride_radius`.
pub const RADIUS_SWEEP: [f64; 5] = [0.3, 0.5, 0.7, 0.9, 1.1];

/// A labelled config variant.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub label: String,
    pub config: RunConfig,
}

fn row(label: String, base: &RunConfig, edit: impl FnOnce(&mut RunConfig)) -> AblationRow {
    let mut config = base.clone();
    edit(&mut config);
    AblationRow { label, config }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// The row set of `axis` around `base`. `blocks` holds the two block counts
/// crossed by the `blocks` axis.
pub fn ablation_rows(axis: AblationAxis, base: &RunConfig, blocks: [usize; 2]) -> Vec<AblationRow> {
    match axis {
        AblationAxis::Modules => [(false, false), (true, false), (false, true), (true, true)]
            .into_iter()
            .map(|(intra, inter)| {
                row(format!("intra={},inter={}", on_off(intra), on_off(inter)), base, |c| {
                    c.model.intra_enabled = intra;
                    c.model.inter_enabled = inter;
                })
            })
            .collect(),
        AblationAxis::Blocks => {
            let [lo, hi] = blocks;
            [(lo, lo), (lo, hi), (hi, lo), (hi, hi)]
                .into_iter()
                .map(|(intra, inter)| {
                    row(format!("intra_blocks={intra},inter_blocks={inter}"), base, |c| {
                        c.model.intra_blocks = intra;
                        c.model.inter_blocks = inter;
                    })
                })
                .collect()
        }
        AblationAxis::Pe => [PeMode::None, PeMode::Spatial, PeMode::SpatioTemporal]
            .into_iter()
            .map(|pe| row(format!("pe={pe}"), base, |c| c.model.pe = pe))
            .collect(),
        AblationAxis::Order => {
            let intra =
                ScanOrder::all_intra().into_iter().map(|o| row(format!("intra_order={o}"), base, |c| c.model.intra_order = o));
            let inter =
                ScanOrder::all_inter().into_iter().map(|o| row(format!("inter_order={o}"), base, |c| c.model.inter_order = o));
            intra.chain(inter).collect()
        }
        AblationAxis::StrideRadius => {
            let (k0, r0) = (base.model.temporal_kernel, base.model.radius);
            let mut rows: Vec<AblationRow> = KERNEL_SWEEP
                .into_iter()
                .map(|k| row(format!("temporal_kernel={k},radius={r0}"), base, |c| c.model.temporal_kernel = k))
                .collect();
            for r in RADIUS_SWEEP {
                if KERNEL_SWEEP.contains(&k0) && r == r0 {
                    continue;
                }
                rows.push(row(format!("temporal_kernel={k0},radius={r}"), base, |c| c.model.radius = r));
            }
            rows
        }
    }
}

/// Scores of one row over its repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct RowResult {
    pub label: String,
    pub metric: &'static str,
    pub scores: Vec<f64>,
}

impl RowResult {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    /// Sample standard deviation; zero for a single run.
    pub fn std(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

impl fmt::Display for RowResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row={} {}={:.4} std={:.4} runs={}",
            self.label,
            self.metric,
            self.mean(),
            self.std(),
            self.scores.len()
        )
    }
}

/// Trains every row `repeats` times (seeds `seed`, `seed + 1`, ...) on the
/// same videos and scores the final held-out metric, or the training metric
/// when nothing is held out. Each result is passed to `on_row` as it completes.
pub fn run_ablation(
    rows: &[AblationRow],
    repeats: usize,
    mut on_row: impl FnMut(&RowResult) -> anyhow::Result<()>,
) -> anyhow::Result<Vec<RowResult>> {
    if repeats == 0 {
        bail!("repeats must be positive");
    }
    let Some(first) = rows.first() else { return Ok(Vec::new()) };
    let videos = first.config.load_videos().context("loading ablation data")?;
    let mut results = Vec::with_capacity(rows.len());
    for r in rows {
        if r.config.data != first.config.data {
            bail!("ablation rows must share one dataset");
        }
        let metric = primary_metric(r.config.model.task);
        let mut scores = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let mut cfg = r.config.clone();
            cfg.train.seed = cfg.train.seed.wrapping_add(rep as u64);
            let fit = fit(&cfg, &videos, |_| Ok(())).with_context(|| format!("row {}", r.label))?;
            let last = fit.report.last().ok_or_else(|| anyhow!("row {} trained no epochs", r.label))?;
            let metrics = last.eval.as_ref().unwrap_or(&last.train);
            scores.push(metric_value(metrics, metric).ok_or_else(|| anyhow!("no {metric} metric"))?);
        }
        let res = RowResult { label: r.label.clone(), metric, scores };
        on_row(&res)?;
        results.push(res);
    }
    Ok(results)
}

pub fn parse_block_pair(s: &str) -> anyhow::Result<[usize; 2]> {
    let v: Vec<usize> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().context("--blocks")?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => bail!("--blocks takes two counts, got {s:?}"),
    }
}

pub fn ablate(axis: AblationAxis, config: &Path, repeats: usize, blocks: &str, out: &mut dyn Write) -> anyhow::Result<()> {
    let base = load_config(config)?;
    let rows = ablation_rows(axis, &base, parse_block_pair(blocks)?);
    for r in &rows {
        r.config.validate().with_context(|| format!("row {}", r.label))?;
    }
    writeln!(out, "axis={axis} rows={} repeats={repeats}", rows.len())?;
    run_ablation(&rows, repeats, |r| {
        writeln!(out, "{r}")?;
        Ok(out.flush()?)
    })?;
    Ok(())
}
