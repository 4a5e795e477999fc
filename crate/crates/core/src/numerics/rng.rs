use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;

/// Seeded random stream.
///
/// Backed by ChaCha8 (`rand_chacha::ChaCha8Rng`), expanded from a 64-bit seed
/// with `SeedableRng::seed_from_u64`. ChaCha output is specified
/// independently of platform, so a seed fixes every draw bit-for-bit.
/// Gaussian draws use `rand_distr::StandardNormal`.
///
/// Independent streams for the same seed (per update, per utterance) come
/// from [`Rng::stream`], which selects a ChaCha stream id rather than
/// re-seeding.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `id` of `seed`; disjoint from stream 0 used by [`Rng::new`].
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `low..=high`.
    pub fn int_range(&mut self, low: usize, high: usize) -> usize {
        self.inner.random_range(low..=high)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| std * self.normal())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.int_range(0, i);
            items.swap(i, j);
        }
    }
}
