//! Seeded random sources.
//!
//! Every stream is a ChaCha8 generator keyed by `seed_from_u64(seed)` with the
//! ChaCha stream id set to a caller-chosen value, so one seed can feed several
//! independent, reproducible streams (e.g. one per epoch). ChaCha output is
//! platform independent. Gaussian variates come from the Box–Muller transform,
//! which consumes exactly two uniforms per pair of normals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` by widening multiplication (Lemire, without the
/// rejection step; bias is below `n / 2^64`).
#[inline]
pub fn below(rng: &mut Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Fisher–Yates shuffle driven by [`below`].
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

/// Standard normal variates via Box–Muller, caching the second of each pair.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(rng: Rng) -> Self {
        GaussianStream { rng, spare: None }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - uniform(&mut self.rng);
        let u2 = uniform(&mut self.rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next();
        }
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }
}
