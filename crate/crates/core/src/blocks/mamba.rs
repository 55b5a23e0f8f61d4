use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::ssm::DEFAULT_N_STATE;

/// Standard deviation of the normal initialisation of projection matrices.
pub const PROJECTION_INIT_STD: f64 = 0.02;

/// Shape hyperparameters of one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub expand: usize,
    pub n_state: usize,
    pub conv_width: usize,
}

impl BlockConfig {
    pub fn new(d_model: usize) -> Self {
        Self { d_model, expand: 2, n_state: DEFAULT_N_STATE, conv_width: 4 }
    }

    pub fn d_inner(&self) -> usize {
        self.d_model * self.expand
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.expand == 0 || self.n_state == 0 || self.conv_width == 0 {
            return Err(Error::Config("block dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter handles of one selective state-space block.
///
/// ```text
/// u   = LN1(x)
/// x'  = conv(u W_in) + b_conv
/// s   = SSM(silu(x'))
/// out = (LN2(s) * silu(u W_gate)) W_out + x
/// ```
///
/// `A = -exp(A_log)` keeps the state matrix negative. `W_out` starts at zero so
/// a fresh block is the identity map.
#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub config: BlockConfig,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub w_in: ParamId,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub w_delta: ParamId,
    pub delta_bias: ParamId,
    pub w_b: ParamId,
    pub w_c: ParamId,
    pub a_log: ParamId,
    pub d_skip: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub w_gate: ParamId,
    pub w_out: ParamId,
}

impl MambaBlock {
    /// Registers a freshly initialised block under `prefix/`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, config: BlockConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, e, n, w) = (config.d_model, config.d_inner(), config.n_state, config.conv_width);
        let std = PROJECTION_INIT_STD;
        let mut add = |name: &str, t: Tensor| store.add(format!("{prefix}/{name}"), t);
        let a_log: Vec<f64> = (0..e).flat_map(|_| (1..=n).map(|k| (k as f64).ln())).collect();
        Ok(Self {
            config,
            ln1_gamma: add("ln1.gamma", Tensor::full([d], 1.0))?,
            ln1_beta: add("ln1.beta", Tensor::zeros([d]))?,
            w_in: add("w_in", Tensor::randn([d, e], std, rng))?,
            conv_kernel: add("conv.kernel", Tensor::randn([w, e], 1.0 / (w as f64).sqrt(), rng))?,
            conv_bias: add("conv.bias", Tensor::zeros([e]))?,
            w_delta: add("ssm.w_delta", Tensor::randn([e, e], std, rng))?,
            delta_bias: add("ssm.delta_bias", Tensor::zeros([e]))?,
            w_b: add("ssm.w_b", Tensor::randn([e, n], std, rng))?,
            w_c: add("ssm.w_c", Tensor::randn([e, n], std, rng))?,
            a_log: add("ssm.a_log", Tensor::new([e, n], a_log)?)?,
            d_skip: add("ssm.d", Tensor::full([e], 1.0))?,
            ln2_gamma: add("ln2.gamma", Tensor::full([e], 1.0))?,
            ln2_beta: add("ln2.beta", Tensor::zeros([e]))?,
            w_gate: add("w_gate", Tensor::randn([d, e], std, rng))?,
            w_out: add("w_out", Tensor::zeros([e, d]))?,
        })
    }

    /// Applies the block to `[S, L, d]` (or `[L, d]`) features.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.shape(x).last() != Some(&self.config.d_model) {
            return Err(Error::shape(format!("block of width {} got {:?}", self.config.d_model, tape.shape(x))));
        }
        let p = |tape: &mut Tape, id| tape.param(store, id);
        let (g1, b1) = (p(tape, self.ln1_gamma), p(tape, self.ln1_beta));
        let u = tape.layer_norm(x, g1, b1)?;

        let w_in = p(tape, self.w_in);
        let xs = tape.matmul(u, w_in)?;
        let k = p(tape, self.conv_kernel);
        let xc = tape.depthwise_conv1d(xs, k)?;
        let cb = p(tape, self.conv_bias);
        let xc = tape.add_bias(xc, cb)?;
        let xa = tape.silu(xc);

        let w_delta = p(tape, self.w_delta);
        let pre = tape.matmul(xa, w_delta)?;
        let db = p(tape, self.delta_bias);
        let pre = tape.add_bias(pre, db)?;
        let delta = tape.softplus(pre);
        let w_b = p(tape, self.w_b);
        let b = tape.matmul(xa, w_b)?;
        let w_c = p(tape, self.w_c);
        let c = tape.matmul(xa, w_c)?;
        let a_log = p(tape, self.a_log);
        let a = tape.exp(a_log);
        let a = tape.neg(a);
        let d_skip = p(tape, self.d_skip);
        let s = tape.selective_scan(xa, delta, a, b, c, d_skip)?;

        let (g2, b2) = (p(tape, self.ln2_gamma), p(tape, self.ln2_beta));
        let sn = tape.layer_norm(s, g2, b2)?;
        let w_gate = p(tape, self.w_gate);
        let gate = tape.matmul(u, w_gate)?;
        let gate = tape.silu(gate);
        let z = tape.mul(sn, gate)?;
        let w_out = p(tape, self.w_out);
        let y = tape.matmul(z, w_out)?;
        tape.add(y, x)
    }
}

/// A stack of blocks applied in order.
#[derive(Clone, Debug, Default)]
pub struct BlockStack {
    pub blocks: Vec<MambaBlock>,
}

impl BlockStack {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        depth: usize,
        config: BlockConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| MambaBlock::new(store, &format!("{prefix}/block{i}"), config, rng))
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(tape, store, x)?;
        }
        Ok(x)
    }
}
