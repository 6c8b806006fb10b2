//! The seeded generator used everywhere randomness is consumed.
//!
//! Algorithm: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)`. Independent streams are selected with the ChaCha
//! stream id, so `(seed, stream)` fully determines every draw regardless of
//! platform or thread scheduling. Indices are drawn over `u64` ranges so the
//! result does not depend on the width of `usize`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name and version of the generator contract; recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha8-v1";

#[derive(Debug, Clone)]
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Generator for one logical stream (e.g. one walk) under a shared seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.0.random_range(0..n as u64) as usize
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Draw an index proportionally to non-negative `weights` with a single
    /// uniform draw. Returns `None` when the total weight is not positive.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return None;
        }
        let target = self.unit() * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = Some(i);
                if target < acc {
                    return Some(i);
                }
            }
        }
        // Rounding can leave target == total.
        last_positive
    }
}
