//! Differentiable primitives. Each has a pure forward kernel on [`Tensor`]s and a
//! tape method that records it together with its adjoint.

use std::sync::Arc;

use super::linalg::{gemm, matmul as gemm_nn, Layout};
use super::tape::{Backward, BackwardCtx, Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// Epsilon added to the variance inside [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu_scalar(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Elementwise `x * sigmoid(x)`.
pub fn silu(x: &Tensor) -> Tensor {
    map(x, silu_scalar)
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

/// Normalizes the last axis to zero mean and unit variance, then applies `gamma`/`beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    Ok(layer_norm_saved(x, gamma, beta)?.0)
}

fn layer_norm_saved(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let d = x.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape(format!(
            "layer_norm over width {d} with gamma {:?} and beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let rows = x.rows();
    let mut out = vec![0.0; x.numel()];
    let mut xhat = vec![0.0; x.numel()];
    let mut rstd = vec![0.0; rows];
    let (g, b) = (gamma.data(), beta.data());
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[r] = s;
        for j in 0..d {
            let h = (row[j] - mean) * s;
            xhat[r * d + j] = h;
            out[r * d + j] = g[j] * h + b[j];
        }
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), out), xhat, rstd))
}

/// Causal depthwise convolution along the sequence axis of `[L, D]` or `[S, L, D]`.
///
/// `kernels` is `[w, D]`; output position `t` reads `x[t-w+1..=t]`, zero left-padded.
pub fn depthwise_conv1d(x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let (s, l, d) = seq_dims(x)?;
    if kernels.rank() != 2 || kernels.shape()[1] != d {
        return Err(Error::shape(format!(
            "depthwise kernels {:?} for {d} channels",
            kernels.shape()
        )));
    }
    let w = kernels.shape()[0];
    let (xd, kd) = (x.data(), kernels.data());
    let mut out = vec![0.0; x.numel()];
    for seq in 0..s {
        let base = seq * l * d;
        for t in 0..l {
            let o = &mut out[base + t * d..base + (t + 1) * d];
            for j in 0..w {
                let Some(src_t) = (t + j + 1).checked_sub(w) else { continue };
                let src = &xd[base + src_t * d..base + (src_t + 1) * d];
                let k = &kd[j * d..(j + 1) * d];
                for c in 0..d {
                    o[c] += k[c] * src[c];
                }
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Interprets `[L, D]` as one sequence and `[S, L, D]` as `S` sequences.
pub(crate) fn seq_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [l, d] => Ok((1, l, d)),
        [s, l, d] => Ok((s, l, d)),
        ref other => Err(Error::shape(format!("expected [L, D] or [S, L, D], got {other:?}"))),
    }
}

fn same_shape(tape: &Tape, a: Var, b: Var, op: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::shape(format!(
            "{op}: {:?} vs {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

struct AddOp;
impl Backward for AddOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]
    }
}

struct SubOp;
impl Backward for SubOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad.to_vec()), Some(ctx.grad.iter().map(|g| -g).collect())]
    }
}

struct MulOp;
impl Backward for MulOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let ga = ctx.needs[0].then(|| ctx.grad.iter().zip(b).map(|(g, v)| g * v).collect());
        let gb = ctx.needs[1].then(|| ctx.grad.iter().zip(a).map(|(g, v)| g * v).collect());
        vec![ga, gb]
    }
}

struct AddBiasOp;
impl Backward for AddBiasOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let d = ctx.inputs[1].numel();
        let gb = ctx.needs[1].then(|| {
            let mut gb = vec![0.0; d];
            for row in ctx.grad.chunks(d) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            gb
        });
        vec![Some(ctx.grad.to_vec()), gb]
    }
}

struct ScaleOp(f64);
impl Backward for ScaleOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad.iter().map(|g| g * self.0).collect())]
    }
}

struct MatmulOp {
    rows: usize,
    k: usize,
    n: usize,
}
impl Backward for MatmulOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let (x, w) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let gx = ctx.needs[0].then(|| {
            let mut gx = vec![0.0; self.rows * self.k];
            gemm(self.rows, self.n, self.k, ctx.grad, Layout::Normal, w, Layout::Transposed, &mut gx, 0.0);
            gx
        });
        let gw = ctx.needs[1].then(|| {
            let mut gw = vec![0.0; self.k * self.n];
            gemm(self.k, self.rows, self.n, x, Layout::Transposed, ctx.grad, Layout::Normal, &mut gw, 0.0);
            gw
        });
        vec![gx, gw]
    }
}

/// Elementwise unary op whose derivative is a function of the input value.
struct UnaryOp(fn(f64) -> f64);
impl Backward for UnaryOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let x = ctx.inputs[0].data();
        vec![Some(ctx.grad.iter().zip(x).map(|(g, &v)| g * (self.0)(v)).collect())]
    }
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

struct ExpOp;
impl Backward for ExpOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let y = ctx.output.data();
        vec![Some(ctx.grad.iter().zip(y).map(|(g, v)| g * v).collect())]
    }
}

struct LayerNormOp {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}
impl Backward for LayerNormOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let gamma = ctx.inputs[1].data();
        let d = gamma.len();
        let mut gx = ctx.needs[0].then(|| vec![0.0; self.xhat.len()]);
        let mut gg = vec![0.0; d];
        let mut gb = vec![0.0; d];
        for (r, s) in self.rstd.iter().enumerate() {
            let g = &ctx.grad[r * d..(r + 1) * d];
            let h = &self.xhat[r * d..(r + 1) * d];
            let mut mean_gh = 0.0;
            let mut mean_ghh = 0.0;
            for j in 0..d {
                gg[j] += g[j] * h[j];
                gb[j] += g[j];
                let gh = g[j] * gamma[j];
                mean_gh += gh;
                mean_ghh += gh * h[j];
            }
            mean_gh /= d as f64;
            mean_ghh /= d as f64;
            if let Some(gx) = gx.as_mut() {
                for j in 0..d {
                    gx[r * d + j] = s * (g[j] * gamma[j] - mean_gh - h[j] * mean_ghh);
                }
            }
        }
        vec![gx, ctx.needs[1].then_some(gg), ctx.needs[2].then_some(gb)]
    }
}

struct DwConvOp {
    s: usize,
    l: usize,
    d: usize,
    w: usize,
}
impl Backward for DwConvOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let (x, k) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        let (l, d, w) = (self.l, self.d, self.w);
        let mut gx = vec![0.0; x.len()];
        let mut gk = vec![0.0; k.len()];
        for seq in 0..self.s {
            let base = seq * l * d;
            for t in 0..l {
                let g = &ctx.grad[base + t * d..base + (t + 1) * d];
                for j in 0..w {
                    let Some(src_t) = (t + j + 1).checked_sub(w) else { continue };
                    let off = base + src_t * d;
                    for c in 0..d {
                        gx[off + c] += k[j * d + c] * g[c];
                        gk[j * d + c] += x[off + c] * g[c];
                    }
                }
            }
        }
        vec![ctx.needs[0].then_some(gx), ctx.needs[1].then_some(gk)]
    }
}

struct MaxPoolOp {
    argmax: Vec<usize>,
    input_len: usize,
}
impl Backward for MaxPoolOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let mut gx = vec![0.0; self.input_len];
        for (g, &src) in ctx.grad.iter().zip(&self.argmax) {
            gx[src] += g;
        }
        vec![Some(gx)]
    }
}

/// Sparse row-mixing matrix: output row `i` is `sum_j w_ij * input_row_j`.
#[derive(Clone, Debug, Default)]
pub struct RowMix {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl RowMix {
    /// Pure selection of input rows (gather).
    pub fn gather(indices: &[usize]) -> Self {
        Self { rows: indices.iter().map(|&i| vec![(i, 1.0)]).collect() }
    }
}

struct MixRowsOp {
    mix: Arc<RowMix>,
    d: usize,
    input_len: usize,
}
impl Backward for MixRowsOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let d = self.d;
        let mut gx = vec![0.0; self.input_len];
        for (i, terms) in self.mix.rows.iter().enumerate() {
            let g = &ctx.grad[i * d..(i + 1) * d];
            for &(src, w) in terms {
                gx[src * d..(src + 1) * d].iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
            }
        }
        vec![Some(gx)]
    }
}

struct ReshapeOp;
impl Backward for ReshapeOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(ctx.grad.to_vec())]
    }
}

struct SumOp(usize);
impl Backward for SumOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        vec![Some(vec![ctx.grad[0]; self.0])]
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let (x, y) = (self.value(a), self.value(b));
        let out = Tensor::from_parts(x.shape().to_vec(), x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect());
        Ok(self.record(out, &[a, b], AddOp))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let (x, y) = (self.value(a), self.value(b));
        let out = Tensor::from_parts(x.shape().to_vec(), x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect());
        Ok(self.record(out, &[a, b], SubOp))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let (x, y) = (self.value(a), self.value(b));
        let out = Tensor::from_parts(x.shape().to_vec(), x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect());
        Ok(self.record(out, &[a, b], MulOp))
    }

    /// Adds a `[d]` vector to every row of a `[..., d]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let d = xv.last_dim();
        if bv.shape() != [d] {
            return Err(Error::shape(format!("bias {:?} for width {d}", bv.shape())));
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d) {
            row.iter_mut().zip(bv.data()).for_each(|(a, b)| *a += b);
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.record(out, &[x, bias], AddBiasOp))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = map(self.value(x), |v| v * factor);
        self.record(out, &[x], ScaleOp(factor))
    }

    /// `[..., k] x [k, n] -> [..., n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let k = xv.last_dim();
        if wv.rank() != 2 || wv.shape()[0] != k {
            return Err(Error::shape(format!("matmul {:?} x {:?}", xv.shape(), wv.shape())));
        }
        let (rows, n) = (xv.rows(), wv.shape()[1]);
        let data = gemm_nn(rows, k, n, xv.data(), wv.data());
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = n;
        Ok(self.record(Tensor::from_parts(shape, data), &[x, w], MatmulOp { rows, k, n }))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = silu(self.value(x));
        self.record(out, &[x], UnaryOp(silu_grad))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = map(self.value(x), sigmoid);
        self.record(out, &[x], UnaryOp(|v| sigmoid(v) * (1.0 - sigmoid(v))))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = map(self.value(x), softplus_scalar);
        self.record(out, &[x], UnaryOp(sigmoid))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = map(self.value(x), f64::exp);
        self.record(out, &[x], ExpOp)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (out, xhat, rstd) = layer_norm_saved(self.value(x), self.value(gamma), self.value(beta))?;
        Ok(self.record(out, &[x, gamma, beta], LayerNormOp { xhat, rstd }))
    }

    pub fn depthwise_conv1d(&mut self, x: Var, kernels: Var) -> Result<Var> {
        let out = depthwise_conv1d(self.value(x), self.value(kernels))?;
        let (s, l, d) = seq_dims(self.value(x))?;
        let w = self.value(kernels).shape()[0];
        Ok(self.record(out, &[x, kernels], DwConvOp { s, l, d, w }))
    }

    /// Maximum over `axis`, which is removed from the shape. Ties route to the lowest index.
    pub fn max_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape();
        if axis >= shape.len() {
            return Err(Error::shape(format!("max_pool axis {axis} on {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let m = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let data = xv.data();
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * m * inner + i;
                for j in 1..m {
                    let idx = (o * m + j) * inner + i;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
        let mut out_shape: Vec<usize> = shape.to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let input_len = xv.numel();
        Ok(self.record(Tensor::from_parts(out_shape, out), &[x], MaxPoolOp { argmax, input_len }))
    }

    /// Linear recombination of the rows of `x` viewed as `[rows, d]`; output is `[mix.rows.len(), d]`.
    pub fn mix_rows(&mut self, x: Var, mix: Arc<RowMix>) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.last_dim();
        let rows = xv.rows();
        if mix.rows.is_empty() {
            return Err(Error::shape("row mix produces no rows"));
        }
        let mut out = vec![0.0; mix.rows.len() * d];
        for (i, terms) in mix.rows.iter().enumerate() {
            let o = &mut out[i * d..(i + 1) * d];
            for &(src, w) in terms {
                if src >= rows {
                    return Err(Error::shape(format!("row {src} out of range for {rows} rows")));
                }
                o.iter_mut().zip(xv.row(src)).for_each(|(a, b)| *a += w * b);
            }
        }
        let input_len = xv.numel();
        let out = Tensor::from_parts(vec![mix.rows.len(), d], out);
        Ok(self.record(out, &[x], MixRowsOp { mix, d, input_len }))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        self.mix_rows(x, Arc::new(RowMix::gather(indices)))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.record(out, &[x], ReshapeOp))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.numel();
        let out = Tensor::scalar(xv.data().iter().sum());
        self.record(out, &[x], SumOp(n))
    }

    /// `sum(x * weights)` against a constant weight tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        let w = self.constant(weights.clone());
        let prod = self.mul(x, w)?;
        Ok(self.sum(prod))
    }
}
