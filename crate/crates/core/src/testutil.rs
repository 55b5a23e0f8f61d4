//! Finite-difference gradient oracle shared by unit tests.

use crate::numerics::{ParamStore, Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares tape gradients of `f` against central differences for every input.
/// Returns the worst per-input relative error.
pub fn check_inputs(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = vec![0.0; inputs[i].numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += FD_STEP;
            let up = eval(&xs);
            xs[i].data_mut()[j] -= 2.0 * FD_STEP;
            let down = eval(&xs);
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Same as [`check_inputs`] but over every tensor of a parameter store.
/// Returns `(name, rel_err)` per parameter.
pub fn check_params(store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Var) -> Vec<(String, f64)> {
    let mut tape = Tape::new();
    let loss = f(&mut tape, store);
    let grads = tape.backward(loss).unwrap();
    let mut work = store.clone();
    work.zero_grads();
    grads.accumulate_into(&mut work).unwrap();

    let mut out = Vec::new();
    for id in store.ids() {
        let analytic = work.get(id).grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; store.get(id).numel()]);
        let mut numeric = vec![0.0; analytic.len()];
        let mut probe = store.clone();
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = store.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + FD_STEP;
            let up = {
                let mut t = Tape::new();
                let l = f(&mut t, &probe);
                t.value(l).item()
            };
            probe.get_mut(id).data_mut()[j] = orig - FD_STEP;
            let down = {
                let mut t = Tape::new();
                let l = f(&mut t, &probe);
                t.value(l).item()
            };
            probe.get_mut(id).data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        out.push((store.name(id).to_owned(), rel_err(&analytic, &numeric)));
    }
    out
}
