//! Seeded random number generation.
//!
//! Every stochastic step in the crate draws from [`Rng`]: a xoshiro256++
//! stream whose 256-bit state is expanded from a 64-bit seed with
//! splitmix64. Both algorithms are fully specified integer arithmetic, so a
//! given seed produces the same stream on every platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Debug)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Derives an independent stream for a named sub-task.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Rng::new(splitmix64(seed ^ splitmix64(stream)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std)
            .expect("finite std")
            .sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    /// Samples `k` distinct elements without replacement, in draw order.
    pub fn choose_distinct<T: Clone>(&mut self, pool: &[T], k: usize) -> Vec<T> {
        rand::seq::index::sample(&mut self.0, pool.len(), k)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect()
    }
}

/// One round of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
