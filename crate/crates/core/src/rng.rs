//! Seeded random streams.
//!
//! Every stochastic component draws from a [`Rng`] built from a 64-bit seed
//! and a stream id. The generator is ChaCha8, whose output is specified
//! independently of platform, so identical `(seed, stream)` pairs yield
//! identical sequences everywhere.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream ids used by the library. Keeping them apart means, e.g., label
/// noise injection never perturbs the training stream.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const LABEL_NOISE: u64 = 4;
    pub const RANDOM_MARKERS: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const LR_PROBE: u64 = 1000;
}

/// Lower/upper clamp for uniforms feeding the Gumbel transform.
pub const GUMBEL_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Standard Gumbel(0, 1) draw, `-ln(-ln u)` with `u` clamped to
    /// `(eps, 1 - eps)`.
    pub fn gumbel(&mut self) -> f64 {
        let u = self.uniform().clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
        -(-u.ln()).ln()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `amount` distinct indices from `0..n`, in sampling order.
    pub fn sample_indices(&mut self, n: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, amount).into_vec()
    }
}
