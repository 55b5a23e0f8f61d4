//! Selective scan kernels.
//!
//! ```text
//! delta_t = softplus(x_t W_delta + delta_bias)          [d]
//! B_t = x_t W_B,  C_t = x_t W_C                          [n_state]
//! A_bar_t = exp(delta_t * A),  B_bar_t = delta_t * B_t  [d, n_state]
//! h_t = A_bar_t * h_{t-1} + B_bar_t * x_t,  h_0 = 0
//! y_t = C_t . h_t + D * x_t
//! ```

use crate::error::{Error, Result};
use crate::numerics::ops::softplus_scalar;
use crate::numerics::{matmul, Tensor};

/// Raw parameters of one selective state-space layer over `d` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams {
    /// Diagonal state matrix `[d, n_state]`, strictly negative.
    pub a: Tensor,
    /// `[d, n_state]`
    pub w_b: Tensor,
    /// `[d, n_state]`
    pub w_c: Tensor,
    /// `[d, d]`
    pub w_delta: Tensor,
    /// `[d]`
    pub delta_bias: Tensor,
    /// Skip gain `[d]`.
    pub d_skip: Tensor,
}

impl SsmParams {
    /// Default initialization: `A = -(1, 2, ..., n_state)` per channel, `D = 1`,
    /// zero step-size bias and the given projections.
    pub fn with_projections(w_b: Tensor, w_c: Tensor, w_delta: Tensor) -> Result<Self> {
        let d = w_b.shape()[0];
        let n = w_b.last_dim();
        let a = Tensor::from_parts(vec![d, n], (0..d).flat_map(|_| (1..=n).map(|k| -(k as f64))).collect());
        let p = Self {
            a,
            w_b,
            w_c,
            w_delta,
            delta_bias: Tensor::zeros([d]),
            d_skip: Tensor::full([d], 1.0),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn n_state(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.rank() != 2 {
            return Err(Error::shape(format!("A must be [d, n_state], got {:?}", self.a.shape())));
        }
        let (d, n) = (self.width(), self.n_state());
        let checks: [(&str, &Tensor, &[usize]); 5] = [
            ("W_B", &self.w_b, &[d, n]),
            ("W_C", &self.w_c, &[d, n]),
            ("W_delta", &self.w_delta, &[d, d]),
            ("delta_bias", &self.delta_bias, &[d]),
            ("D", &self.d_skip, &[d]),
        ];
        for (name, t, shape) in checks {
            if t.shape() != shape {
                return Err(Error::shape(format!("{name} is {:?}, expected {shape:?}", t.shape())));
            }
        }
        if self.a.data().iter().any(|&v| !(v < 0.0)) {
            return Err(Error::invalid("A must be strictly negative"));
        }
        Ok(())
    }

    /// Input-dependent quantities `(delta [L,d], B [L,n], C [L,n])` for `x [L,d]`.
    pub fn selection(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let d = self.width();
        if x.rank() != 2 || x.last_dim() != d {
            return Err(Error::shape(format!("scan input {:?} for width {d}", x.shape())));
        }
        let l = x.rows();
        let n = self.n_state();
        let mut delta = matmul(l, d, d, x.data(), self.w_delta.data());
        for row in delta.chunks_mut(d) {
            for (v, b) in row.iter_mut().zip(self.delta_bias.data()) {
                *v = softplus_scalar(*v + b);
            }
        }
        let b = matmul(l, d, n, x.data(), self.w_b.data());
        let c = matmul(l, d, n, x.data(), self.w_c.data());
        Ok((delta, b, c))
    }
}

/// Hidden state `[d, n_state]` carried between calls to [`scan_with_state`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScanState {
    pub h: Tensor,
}

impl ScanState {
    pub fn zeros(d: usize, n_state: usize) -> Self {
        Self { h: Tensor::zeros([d, n_state]) }
    }

    pub fn max_abs(&self) -> f64 {
        self.h.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Zero-order hold for `A`, Euler for `B`: returns `(A_bar, B_bar)`, both `[L, d, n_state]`.
pub fn discretize(delta: &Tensor, a: &Tensor, b: &Tensor) -> Result<(Tensor, Tensor)> {
    if delta.rank() != 2 || a.rank() != 2 || b.rank() != 2 {
        return Err(Error::shape("discretize expects delta [L,d], A [d,n], B [L,n]"));
    }
    let (l, d) = (delta.shape()[0], delta.shape()[1]);
    let n = a.shape()[1];
    if a.shape()[0] != d || b.shape() != [l, n] {
        return Err(Error::shape(format!(
            "discretize: delta {:?}, A {:?}, B {:?}",
            delta.shape(),
            a.shape(),
            b.shape()
        )));
    }
    if let Some(bad) = delta.data().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::invalid(format!("step size must be positive, got {bad}")));
    }
    let mut a_bar = Vec::with_capacity(l * d * n);
    let mut b_bar = Vec::with_capacity(l * d * n);
    for t in 0..l {
        for c in 0..d {
            let dt = delta.data()[t * d + c];
            for k in 0..n {
                a_bar.push((dt * a.data()[c * n + k]).exp());
                b_bar.push(dt * b.data()[t * n + k]);
            }
        }
    }
    Ok((Tensor::from_parts(vec![l, d, n], a_bar), Tensor::from_parts(vec![l, d, n], b_bar)))
}

/// Raw recurrence over one sequence. Slices hold `u`/`delta` as `[L,d]`,
/// `b`/`c` as `[L,n]`, `a` as `[d,n]`; `h` is the `[d,n]` carry, updated in place.
#[allow(clippy::too_many_arguments)]
pub(crate) fn recurrence_sequential(
    u: &[f64],
    delta: &[f64],
    a: &[f64],
    b: &[f64],
    c: &[f64],
    d_skip: &[f64],
    h: &mut [f64],
    y: &mut [f64],
) {
    let d = d_skip.len();
    let n = a.len() / d;
    let l = u.len() / d;
    for t in 0..l {
        let bt = &b[t * n..(t + 1) * n];
        let ct = &c[t * n..(t + 1) * n];
        for ch in 0..d {
            let x = u[t * d + ch];
            let dt = delta[t * d + ch];
            let hc = &mut h[ch * n..(ch + 1) * n];
            let ac = &a[ch * n..(ch + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                hc[k] = (dt * ac[k]).exp() * hc[k] + dt * bt[k] * x;
                acc += ct[k] * hc[k];
            }
            y[t * d + ch] = acc + d_skip[ch] * x;
        }
    }
}

/// In-place work-efficient (Blelloch) exclusive scan over `lanes` independent
/// first-order recurrences, with elements `(a, b)` composed as
/// `(a1, b1) then (a2, b2) = (a1 a2, a2 b1 + b2)`.
///
/// Element `i` of lane `k` lives at `a[i * lanes + k]`. The element count must be a
/// power of two; callers pad with the identity `(1, 0)`.
pub(crate) fn blelloch_exclusive(a: &mut [f64], b: &mut [f64], lanes: usize) {
    let len = a.len() / lanes;
    assert!(len.is_power_of_two(), "scan length {len} is not a power of two");
    let mut stride = 1;
    while stride < len {
        let mut i = 2 * stride - 1;
        while i < len {
            let (l, r) = ((i - stride) * lanes, i * lanes);
            for k in 0..lanes {
                let (a1, b1) = (a[l + k], b[l + k]);
                let (a2, b2) = (a[r + k], b[r + k]);
                a[r + k] = a1 * a2;
                b[r + k] = a2 * b1 + b2;
            }
            i += 2 * stride;
        }
        stride *= 2;
    }
    let last = (len - 1) * lanes;
    a[last..last + lanes].fill(1.0);
    b[last..last + lanes].fill(0.0);
    stride = len / 2;
    while stride >= 1 {
        let mut i = 2 * stride - 1;
        while i < len {
            let (l, r) = ((i - stride) * lanes, i * lanes);
            for k in 0..lanes {
                let (pa, pb) = (a[r + k], b[r + k]);
                let (la, lb) = (a[l + k], b[l + k]);
                a[l + k] = pa;
                b[l + k] = pb;
                a[r + k] = pa * la;
                b[r + k] = la * pb + lb;
            }
            i += 2 * stride;
        }
        stride /= 2;
    }
}

/// Solves `h_i = a_i h_{i-1} + b_i`, `h_{-1} = 0`, with the padded associative scan.
pub fn linear_recurrence_parallel(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return Vec::new();
    }
    let len = a.len().next_power_of_two();
    let mut pa = a.to_vec();
    let mut pb = b.to_vec();
    pa.resize(len, 1.0);
    pb.resize(len, 0.0);
    blelloch_exclusive(&mut pa, &mut pb, 1);
    // inclusive prefix applied to h = 0 is the b-part of (exclusive then element)
    (0..a.len()).map(|i| a[i] * pb[i] + b[i]).collect()
}

fn check_input(params: &SsmParams, x: &Tensor) -> Result<()> {
    params.validate()?;
    if x.rank() != 2 || x.last_dim() != params.width() {
        return Err(Error::shape(format!("scan input {:?} for width {}", x.shape(), params.width())));
    }
    Ok(())
}

/// Reference selective scan: the plain left-to-right recurrence.
pub fn selective_scan_sequential(params: &SsmParams, x: &Tensor) -> Result<Tensor> {
    let mut state = ScanState::zeros(params.width(), params.n_state());
    scan_with_state(params, x, &mut state)
}

/// Sequential scan continuing from `state`, which holds `h` after the last token on return.
pub fn scan_with_state(params: &SsmParams, x: &Tensor, state: &mut ScanState) -> Result<Tensor> {
    check_input(params, x)?;
    if state.h.shape() != [params.width(), params.n_state()] {
        return Err(Error::shape(format!("state {:?}", state.h.shape())));
    }
    let (delta, b, c) = params.selection(x)?;
    let mut y = vec![0.0; x.numel()];
    recurrence_sequential(
        x.data(),
        &delta,
        params.a.data(),
        &b,
        &c,
        params.d_skip.data(),
        state.h.data_mut(),
        &mut y,
    );
    Ok(Tensor::from_parts(x.shape().to_vec(), y))
}

/// Selective scan through the associative-operator formulation. Each channel's
/// `n_state` recurrences are solved as one lane-interleaved Blelloch scan padded to
/// the next power of two.
pub fn selective_scan_parallel(params: &SsmParams, x: &Tensor) -> Result<Tensor> {
    check_input(params, x)?;
    let (delta, b, c) = params.selection(x)?;
    let (l, d, n) = (x.rows(), params.width(), params.n_state());
    let len = l.next_power_of_two();
    let (u, a) = (x.data(), params.a.data());
    let mut ea = vec![1.0; len * n];
    let mut eb = vec![0.0; len * n];
    let mut elems_a = vec![0.0; l * n];
    let mut elems_b = vec![0.0; l * n];
    let mut y = vec![0.0; l * d];
    for ch in 0..d {
        ea.fill(1.0);
        eb.fill(0.0);
        let ac = &a[ch * n..(ch + 1) * n];
        for t in 0..l {
            let dt = delta[t * d + ch];
            let x = u[t * d + ch];
            for k in 0..n {
                ea[t * n + k] = (dt * ac[k]).exp();
                eb[t * n + k] = dt * b[t * n + k] * x;
            }
        }
        // keep the elements: the exclusive scan overwrites them
        elems_a.copy_from_slice(&ea[..l * n]);
        elems_b.copy_from_slice(&eb[..l * n]);
        blelloch_exclusive(&mut ea, &mut eb, n);
        for t in 0..l {
            let mut acc = 0.0;
            for k in 0..n {
                let i = t * n + k;
                let h = elems_a[i] * eb[i] + elems_b[i];
                acc += c[i] * h;
            }
            y[t * d + ch] = acc + params.d_skip.data()[ch] * u[t * d + ch];
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), y))
}

/// Upper bound on `max |h|` for a scan of `x` under `params`:
/// `max|B_bar x| / (1 - max A_bar)` (geometric series).
pub fn hidden_state_bound(params: &SsmParams, x: &Tensor) -> Result<f64> {
    check_input(params, x)?;
    let (delta, b, _) = params.selection(x)?;
    let (d, n) = (params.width(), params.n_state());
    let mut rho = 0.0f64;
    let mut drive = 0.0f64;
    for t in 0..x.rows() {
        for ch in 0..d {
            let dt = delta[t * d + ch];
            let xv = x.data()[t * d + ch];
            for k in 0..n {
                rho = rho.max((dt * params.a.data()[ch * n + k]).exp());
                drive = drive.max((dt * b[t * n + k] * xv).abs());
            }
        }
    }
    Ok(drive / (1.0 - rho))
}
