use crate::error::{Error, Result};
use crate::numerics::{matmul, Tensor};

/// Single-head softmax attention `softmax(Q K^T / sqrt(d)) V` with the full
/// `[L, L]` score matrix materialized.
pub fn attention_reference(x: &Tensor, w_q: &Tensor, w_k: &Tensor, w_v: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::shape(format!("attention input {:?}", x.shape())));
    }
    let (l, d) = (x.rows(), x.last_dim());
    for w in [w_q, w_k, w_v] {
        if w.shape() != [d, d] {
            return Err(Error::shape(format!("projection {:?} for width {d}", w.shape())));
        }
    }
    let q = matmul(l, d, d, x.data(), w_q.data());
    let k = matmul(l, d, d, x.data(), w_k.data());
    let v = matmul(l, d, d, x.data(), w_v.data());
    let mut scores = vec![0.0; l * l];
    crate::numerics::linalg_gemm_nt(l, d, l, &q, &k, &mut scores);
    let scale = 1.0 / (d as f64).sqrt();
    for row in scores.chunks_mut(l) {
        let mut max = f64::NEG_INFINITY;
        for s in row.iter_mut() {
            *s *= scale;
            max = max.max(*s);
        }
        let mut total = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        row.iter_mut().for_each(|s| *s /= total);
    }
    let y = matmul(l, l, d, &scores, &v);
    Ok(Tensor::from_parts(vec![l, d], y))
}
