use crate::error::{Error, Result};
use crate::numerics::ParamStore;

/// Momentum SGD with a step-decay learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Epochs at which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, decay_epochs: vec![20, 30], decay_factor: 0.1 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Config("decay factor must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * self.decay_factor.powi(decays as i32)
    }
}

/// Optimizer state: one velocity buffer per parameter.
#[derive(Clone, Debug)]
pub struct SgdState {
    pub config: SgdConfig,
    pub epoch: usize,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(config: SgdConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let velocity = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Ok(Self { config, epoch: 0, velocity })
    }

    pub fn lr(&self) -> f64 {
        self.config.lr_at_epoch(self.epoch)
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// `v <- mu v + g; p <- p - lr v`, using the gradients held by `store`.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.velocity.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} parameters, store has {}",
                self.velocity.len(),
                store.len()
            )));
        }
        let (lr, mu) = (self.lr(), self.config.momentum);
        for (id, v) in store.ids().collect::<Vec<_>>().into_iter().zip(&mut self.velocity) {
            let t = store.get_mut(id);
            if t.numel() != v.len() {
                return Err(Error::shape("velocity does not match its parameter"));
            }
            let g = t.grad().map(<[f64]>::to_vec);
            match g {
                Some(g) => v.iter_mut().zip(&g).for_each(|(vi, gi)| *vi = mu * *vi + gi),
                None => v.iter_mut().for_each(|vi| *vi *= mu),
            }
            t.data_mut().iter_mut().zip(v.iter()).for_each(|(p, vi)| *p -= lr * vi);
        }
        Ok(())
    }
}
