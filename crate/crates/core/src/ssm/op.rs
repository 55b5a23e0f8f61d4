//! The selective scan as a single differentiable tape primitive.

use crate::error::{Error, Result};
use crate::numerics::{fastmath, seq_dims, Backward, BackwardCtx, Tape, Tensor, Var};

struct ScanOp {
    s: usize,
    l: usize,
    d: usize,
    n: usize,
    /// Hidden states `[S, L, D, N]` saved by the forward pass.
    hs: Vec<f64>,
    /// Discretized decays `exp(delta * A)`, same layout as `hs`.
    decay: Vec<f64>,
}

impl Backward for ScanOp {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Vec<Option<Vec<f64>>> {
        let (s, l, d, n) = (self.s, self.l, self.d, self.n);
        let [u, delta, a, b, c, d_skip] = [0, 1, 2, 3, 4, 5].map(|i| ctx.inputs[i].data());
        let gy = ctx.grad;
        let mut gu = vec![0.0; u.len()];
        let mut gdelta = vec![0.0; delta.len()];
        let mut ga = vec![0.0; a.len()];
        let mut gb = vec![0.0; b.len()];
        let mut gc = vec![0.0; c.len()];
        let mut gd = vec![0.0; d];

        let dn = d * n;
        let mut carry = vec![0.0; dn];
        let mut gh = vec![0.0; n];
        let mut gdec = vec![0.0; n];
        let zeros = vec![0.0; n];
        for seq in 0..s {
            let (ud, nd) = (seq * l * d, seq * l * n);
            let hs = &self.hs[seq * l * dn..(seq + 1) * l * dn];
            let decays = &self.decay[seq * l * dn..(seq + 1) * l * dn];
            carry.fill(0.0);
            for t in (0..l).rev() {
                let nt = nd + t * n..nd + (t + 1) * n;
                let (bt, ct) = (&b[nt.clone()], &c[nt.clone()]);
                for ch in 0..d {
                    let ti = ud + t * d + ch;
                    let (x, dt, g) = (u[ti], delta[ti], gy[ti]);
                    gu[ti] += g * d_skip[ch];
                    gd[ch] += g * x;
                    let base = t * dn + ch * n;
                    let h_t = &hs[base..base + n];
                    let h_prev = if t > 0 { &hs[base - dn..base - dn + n] } else { &zeros[..] };
                    let dec = &decays[base..base + n];
                    let carry_ch = &mut carry[ch * n..(ch + 1) * n];
                    let a_ch = &a[ch * n..(ch + 1) * n];
                    for k in 0..n {
                        gh[k] = g * ct[k] + carry_ch[k];
                        gdec[k] = gh[k] * h_prev[k] * dec[k];
                        carry_ch[k] = gh[k] * dec[k];
                    }
                    let gc_t = &mut gc[nt.clone()];
                    for k in 0..n {
                        gc_t[k] += g * h_t[k];
                    }
                    let ga_ch = &mut ga[ch * n..(ch + 1) * n];
                    for k in 0..n {
                        ga_ch[k] += gdec[k] * dt;
                    }
                    let gb_t = &mut gb[nt.clone()];
                    let dtx = dt * x;
                    for k in 0..n {
                        gb_t[k] += gh[k] * dtx;
                    }
                    let mut g_dt = 0.0;
                    let mut g_bx = 0.0;
                    for k in 0..n {
                        g_dt += gdec[k] * a_ch[k];
                        g_bx += gh[k] * bt[k];
                    }
                    gdelta[ti] += g_dt + g_bx * x;
                    gu[ti] += g_bx * dt;
                }
            }
        }
        let needs = &ctx.needs;
        vec![
            needs[0].then_some(gu),
            needs[1].then_some(gdelta),
            needs[2].then_some(ga),
            needs[3].then_some(gb),
            needs[4].then_some(gc),
            needs[5].then_some(gd),
        ]
    }
}

impl Tape {
    /// Selective scan over `S` independent sequences.
    ///
    /// Shapes: `u`, `delta` are `[S, L, D]` (or `[L, D]`), `a` is `[D, N]`,
    /// `b`, `c` are `[S, L, N]` (or `[L, N]`), `d_skip` is `[D]`. `delta` must
    /// already be positive and `a` negative; both are the caller's responsibility.
    pub fn selective_scan(&mut self, u: Var, delta: Var, a: Var, b: Var, c: Var, d_skip: Var) -> Result<Var> {
        let (s, l, d) = seq_dims(self.value(u))?;
        let av = self.value(a);
        if av.rank() != 2 || av.shape()[0] != d {
            return Err(Error::shape(format!("A {:?} for {d} channels", av.shape())));
        }
        let n = av.shape()[1];
        if self.shape(delta) != self.shape(u) {
            return Err(Error::shape("delta must match the scan input"));
        }
        for (name, v) in [("B", b), ("C", c)] {
            if seq_dims(self.value(v))? != (s, l, n) {
                return Err(Error::shape(format!("{name} {:?} for [{s}, {l}, {n}]", self.shape(v))));
            }
        }
        if self.shape(d_skip) != [d] {
            return Err(Error::shape(format!("D {:?} for {d} channels", self.shape(d_skip))));
        }
        let inputs = [u, delta, a, b, c, d_skip];
        let mut y = vec![0.0; s * l * d];
        let [uv, dv, av, bv, cv, sv] = inputs.map(|v| self.value(v).data());
        let dn = d * n;
        let mut hs = vec![0.0; s * l * dn];
        let mut decay = vec![0.0; s * l * dn];
        let zeros = vec![0.0; n];
        for seq in 0..s {
            let (ud, nd) = (seq * l * d, seq * l * n);
            for t in 0..l {
                let base = (seq * l + t) * dn;
                let bt = &bv[nd + t * n..nd + (t + 1) * n];
                let ct = &cv[nd + t * n..nd + (t + 1) * n];
                let (done, rest) = hs.split_at_mut(base);
                for ch in 0..d {
                    let ti = ud + t * d + ch;
                    let (x, dt) = (uv[ti], dv[ti]);
                    let off = ch * n;
                    let dec = &mut decay[base + off..base + off + n];
                    fastmath::exp_scaled(dt, &av[off..off + n], dec);
                    let prev = if t > 0 { &done[base - dn + off..base - dn + off + n] } else { &zeros[..] };
                    let h = &mut rest[off..off + n];
                    let dtx = dt * x;
                    for k in 0..n {
                        h[k] = dec[k] * prev[k] + dtx * bt[k];
                    }
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += ct[k] * h[k];
                    }
                    y[ti] = sv[ch] * x + acc;
                }
            }
        }
        let out = Tensor::from_parts(self.shape(u).to_vec(), y);
        if !inputs.iter().any(|&v| self.requires_grad(v)) {
            return Ok(self.constant(out));
        }
        Ok(self.record(out, &inputs, ScanOp { s, l, d, n, hs, decay }))
    }
}
