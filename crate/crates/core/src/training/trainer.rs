use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{accuracy, class_iou, edit_score, mean_iou, segmental_f1, F1_THRESHOLDS};
use super::sgd::SgdState;
use crate::error::{Error, Result};
use crate::model::{inverse_frequency_weights, Mamba4D, PreparedVideo, TaskKind};
use crate::numerics::{Gradients, ParamStore, Tape};

/// Loop settings; the optimizer itself comes from the model config.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Weight the loss by inverse class frequency of the training targets.
    pub class_weights: bool,
    /// Stop after the first epoch whose running training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Stop after the first epoch whose held-out accuracy reaches this value.
    /// When both thresholds are set, both must hold.
    pub stop_at_eval_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 8, seed: 0, class_weights: false, stop_at_train_accuracy: None, stop_at_eval_accuracy: None }
    }
}

/// Named metric values in report order.
pub type Metrics = Vec<(String, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's steps.
    pub loss: f64,
    /// Training-set metrics of the predictions made during the epoch's steps.
    pub train: Metrics,
    /// Held-out metrics after the epoch, when a held-out set was given.
    pub eval: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss before the first update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochReport> {
        self.epochs.last()
    }
}

/// One `metric=<name> value=<float> epoch=<int>` log line.
pub fn metric_line(name: &str, value: f64, epoch: usize) -> String {
    format!("metric={name} value={value} epoch={epoch}")
}

pub fn metric_value(metrics: &Metrics, name: &str) -> Option<f64> {
    metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
}

/// The metric set of `task` over per-video predictions and labels.
pub fn task_metrics(task: TaskKind, classes: usize, preds: &[Vec<usize>], truths: &[Vec<usize>]) -> Result<Metrics> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::shape("one prediction per labelled video is required"));
    }
    let flat_p: Vec<usize> = preds.iter().flatten().copied().collect();
    let flat_t: Vec<usize> = truths.iter().flatten().copied().collect();
    Ok(match task {
        TaskKind::Recognition => vec![("accuracy".into(), accuracy(&flat_p, &flat_t)?)],
        TaskKind::ActionSegmentation => {
            let n = preds.len() as f64;
            let mut m = vec![("accuracy".to_string(), accuracy(&flat_p, &flat_t)?)];
            let mut edit = 0.0;
            for (p, t) in preds.iter().zip(truths) {
                edit += edit_score(p, t)? / n;
            }
            m.push(("edit".into(), edit));
            for tau in F1_THRESHOLDS {
                let mut f1 = 0.0;
                for (p, t) in preds.iter().zip(truths) {
                    f1 += segmental_f1(p, t, tau)? / n;
                }
                m.push((format!("f1@{}", (tau * 100.0).round() as usize), f1));
            }
            m
        }
        TaskKind::SemanticSegmentation => {
            let mut m: Metrics = class_iou(&flat_p, &flat_t, classes)?
                .into_iter()
                .enumerate()
                .filter_map(|(c, v)| v.map(|v| (format!("iou_class{c}"), v)))
                .collect();
            m.push(("miou".into(), mean_iou(&flat_p, &flat_t, classes)?));
            m
        }
    })
}

fn argmax_rows(probs: &[f64], classes: usize) -> Vec<usize> {
    probs
        .chunks(classes)
        .map(|r| r.iter().enumerate().fold(0, |best, (i, &v)| if v > r[best] { i } else { best }))
        .collect()
}

/// Predicted labels, logit-row order, for one prepared video.
pub fn predict_labels(model: &Mamba4D, store: &ParamStore, prep: &PreparedVideo) -> Result<Vec<usize>> {
    let probs = model.predict(store, prep)?;
    Ok(argmax_rows(probs.data(), model.config.classes))
}

/// Predicts every video (in parallel) and scores the task metrics.
pub fn evaluate(model: &Mamba4D, store: &ParamStore, data: &[PreparedVideo]) -> Result<Metrics> {
    let preds: Vec<Vec<usize>> = data.par_iter().map(|p| predict_labels(model, store, p)).collect::<Result<_>>()?;
    let truths: Vec<Vec<usize>> = data.iter().map(|p| p.targets.clone()).collect();
    task_metrics(model.config.task, model.config.classes, &preds, &truths)
}

/// Mean loss over `data` without updating anything.
pub fn mean_loss(model: &Mamba4D, store: &ParamStore, data: &[PreparedVideo], weights: Option<&[f64]>) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|p| {
            let mut tape = Tape::new();
            let l = model.loss(&mut tape, store, p, weights)?;
            Ok(tape.value(l).item())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

struct ItemStep {
    loss: f64,
    predictions: Vec<usize>,
    grads: Gradients,
}

fn item_step(
    model: &Mamba4D,
    store: &ParamStore,
    prep: &PreparedVideo,
    weights: Option<&[f64]>,
    scale: f64,
) -> Result<ItemStep> {
    let mut tape = Tape::new();
    let logits = model.logits(&mut tape, store, prep)?;
    let predictions = argmax_rows(tape.value(logits).data(), model.config.classes);
    let loss = tape.cross_entropy(logits, &prep.targets, weights)?;
    let value = tape.value(loss).item();
    let scaled = tape.scale(loss, scale);
    Ok(ItemStep { loss: value, predictions, grads: tape.backward(scaled)? })
}

/// Momentum-SGD training. Batch items are differentiated in parallel on their
/// own tapes and their gradients are summed in batch order, so a run is
/// reproducible for a fixed `(seed, config)`. `on_epoch` sees every report as it
/// is produced.
pub fn train(
    model: &Mamba4D,
    store: &mut ParamStore,
    data: &[PreparedVideo],
    held_out: Option<&[PreparedVideo]>,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochReport) -> Result<()>,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::invalid("no training videos"));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if data.iter().any(|p| p.targets.is_empty()) {
        return Err(Error::invalid("every training video needs labels"));
    }
    let weights = opts.class_weights.then(|| {
        let all: Vec<usize> = data.iter().flat_map(|p| p.targets.iter().copied()).collect();
        inverse_frequency_weights(&all, model.config.classes)
    });
    let weights = weights.as_deref();
    let mut sgd = SgdState::new(model.config.optimizer.clone(), store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial_loss = mean_loss(model, store, data, weights)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        sgd.epoch = epoch;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut preds = vec![Vec::new(); data.len()];
        for batch in order.chunks(opts.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let results: Vec<ItemStep> = {
                let frozen: &ParamStore = store;
                batch.par_iter().map(|&i| item_step(model, frozen, &data[i], weights, scale)).collect::<Result<_>>()?
            };
            store.zero_grads();
            for (&i, step) in batch.iter().zip(results) {
                loss_sum += step.loss;
                step.grads.accumulate_into(store)?;
                preds[i] = step.predictions;
            }
            sgd.step(store)?;
        }
        let truths: Vec<Vec<usize>> = data.iter().map(|p| p.targets.clone()).collect();
        let report = EpochReport {
            epoch,
            lr: sgd.lr(),
            loss: loss_sum / data.len() as f64,
            train: task_metrics(model.config.task, model.config.classes, &preds, &truths)?,
            eval: held_out.map(|h| evaluate(model, store, h)).transpose()?,
        };
        on_epoch(&report)?;
        let reached = |target: Option<f64>, metrics: Option<&Metrics>| target.map(|t| metrics.and_then(|m| metric_value(m, "accuracy")).is_some_and(|a| a >= t));
        let checks = [
            reached(opts.stop_at_train_accuracy, Some(&report.train)),
            reached(opts.stop_at_eval_accuracy, report.eval.as_ref()),
        ];
        let stop = checks.iter().any(Option::is_some) && checks.iter().all(|c| c.unwrap_or(true));
        epochs.push(report);
        if stop {
            break;
        }
    }
    Ok(TrainReport { initial_loss, epochs })
}
