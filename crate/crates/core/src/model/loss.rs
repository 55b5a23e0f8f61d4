use crate::error::{Error, Result};
use crate::numerics::{Backward, BackwardCtx, Tape, Tensor, Var};

/// Row-wise softmax of `[rows, classes]` logits, shifted by the row maximum.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.last_dim();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

/// Inverse class frequencies normalised to mean one over the classes present.
/// Absent classes get weight zero.
pub fn inverse_frequency_weights(targets: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &t in targets {
        if t < classes {
            counts[t] += 1;
        }
    }
    let mut w: Vec<f64> = counts.iter().map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 }).collect();
    let present = counts.iter().filter(|&&n| n > 0).count();
    let mean = w.iter().sum::<f64>() / present.max(1) as f64;
    if mean > 0.0 {
        w.iter_mut().for_each(|v| *v /= mean);
    }
    w
}

struct CrossEntropyOp {
    probs: Vec<f64>,
    targets: Vec<usize>,
    weights: Option<Vec<f64>>,
    classes: usize,
}

impl Backward for CrossEntropyOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let g = ctx.grad[0];
        let rows = self.targets.len();
        let mut out = self.probs.clone();
        for (r, &t) in self.targets.iter().enumerate() {
            let w = self.weights.as_ref().map_or(1.0, |w| w[t]);
            let row = &mut out[r * self.classes..(r + 1) * self.classes];
            row[t] -= 1.0;
            row.iter_mut().for_each(|v| *v *= g * w / rows as f64);
        }
        vec![Some(out)]
    }
}

impl Tape {
    /// `mean_i(-w[y_i] log softmax(logits_i)[y_i])` over `[rows, classes]` logits.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: Option<&[f64]>) -> Result<Var> {
        let lv = self.value(logits);
        let classes = lv.last_dim();
        let rows = lv.numel() / classes;
        if targets.len() != rows {
            return Err(Error::shape(format!("{} targets for {rows} rows of logits", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::invalid(format!("target {bad} out of range for {classes} classes")));
        }
        if weights.is_some_and(|w| w.len() != classes) {
            return Err(Error::shape("class weights must have one entry per class"));
        }
        if lv.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        let probs = softmax_rows(lv).into_data();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &lv.data()[r * classes..(r + 1) * classes];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += weights.map_or(1.0, |w| w[t]) * (lse - row[t]);
        }
        loss /= rows as f64;
        let op = CrossEntropyOp { probs, targets: targets.to_vec(), weights: weights.map(<[f64]>::to_vec), classes };
        Ok(self.record(Tensor::scalar(loss), &[logits], op))
    }
}
