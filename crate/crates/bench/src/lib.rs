//! Shared fixtures for the criterion benchmarks.

use m4d_core::numerics::Tensor;
use m4d_core::ssm::{SsmParams, DEFAULT_N_STATE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Default-initialized scan parameters of width `d` with random projections.
pub fn ssm_params(d: usize, rng: &mut ChaCha8Rng) -> SsmParams {
    let s = 1.0 / (d as f64).sqrt();
    SsmParams::with_projections(
        Tensor::randn([d, DEFAULT_N_STATE], s, rng),
        Tensor::randn([d, DEFAULT_N_STATE], s, rng),
        Tensor::randn([d, d], s, rng),
    )
    .expect("projection shapes agree")
}

/// Attention projections of width `d`.
pub fn attention_weights(d: usize, rng: &mut ChaCha8Rng) -> [Tensor; 3] {
    let s = 1.0 / (d as f64).sqrt();
    [Tensor::randn([d, d], s, rng), Tensor::randn([d, d], s, rng), Tensor::randn([d, d], s, rng)]
}

/// A random `[len, d]` input sequence.
pub fn sequence(len: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn([len, d], 1.0, rng)
}
