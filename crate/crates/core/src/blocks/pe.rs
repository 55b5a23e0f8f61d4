use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// Which displacement components feed the positional encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PeMode {
    /// No positional term is added.
    None,
    /// `(x, y, z)`; the time component is zeroed.
    Spatial,
    /// `(x, y, z, t)`.
    SpatioTemporal,
}

impl PeMode {
    pub const ALL: [PeMode; 3] = [PeMode::None, PeMode::Spatial, PeMode::SpatioTemporal];

    pub fn name(self) -> &'static str {
        match self {
            PeMode::None => "none",
            PeMode::Spatial => "3d",
            PeMode::SpatioTemporal => "4d",
        }
    }
}

impl fmt::Display for PeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PeMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown positional encoding {s:?}")))
    }
}

/// Two-layer perceptron `(x, y, z, t) -> d` with a SiLU hidden layer.
#[derive(Clone, Debug)]
pub struct PositionalEncoder4D {
    pub mode: PeMode,
    pub d: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl PositionalEncoder4D {
    /// The first layer is drawn with unit variance so unit-scale coordinates
    /// reach the nonlinearity; the second uses fan-in scaling.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d: usize, mode: PeMode, rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("positional encoder width must be positive".into()));
        }
        Ok(Self {
            mode,
            d,
            w1: store.add(format!("{prefix}/w1"), Tensor::randn([4, d], 1.0, rng))?,
            b1: store.add(format!("{prefix}/b1"), Tensor::zeros([d]))?,
            w2: store.add(format!("{prefix}/w2"), Tensor::randn([d, d], 1.0 / (d as f64).sqrt(), rng))?,
            b2: store.add(format!("{prefix}/b2"), Tensor::zeros([d]))?,
        })
    }

    /// Encodes `[rows, 4]` displacements; `None` when the mode adds nothing.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, disp: &Tensor) -> Result<Option<Var>> {
        if disp.last_dim() != 4 {
            return Err(Error::shape(format!("displacements {:?} must end in 4", disp.shape())));
        }
        let input = match self.mode {
            PeMode::None => return Ok(None),
            PeMode::SpatioTemporal => disp.clone(),
            PeMode::Spatial => {
                let mut t = disp.clone();
                t.data_mut().chunks_mut(4).for_each(|r| r[3] = 0.0);
                t
            }
        };
        let x = tape.constant(input);
        let w1 = tape.param(store, self.w1);
        let h = tape.matmul(x, w1)?;
        let b1 = tape.param(store, self.b1);
        let h = tape.add_bias(h, b1)?;
        let h = tape.silu(h);
        let w2 = tape.param(store, self.w2);
        let o = tape.matmul(h, w2)?;
        let b2 = tape.param(store, self.b2);
        Ok(Some(tape.add_bias(o, b2)?))
    }

    /// Adds the encoding of `disp` to `x` (same leading shape).
    pub fn add_to(&self, tape: &mut Tape, store: &ParamStore, x: Var, disp: &Tensor) -> Result<Var> {
        match self.encode(tape, store, disp)? {
            None => Ok(x),
            Some(pe) => {
                let pe = tape.reshape(pe, tape.shape(x).to_vec())?;
                tape.add(x, pe)
            }
        }
    }
}
