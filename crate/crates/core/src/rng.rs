//! Deterministic sampling used by the random baselines.
//!
//! ChaCha20 keyed from a 64-bit seed, one stream per acquisition round.
//! Bounded integers come from Lemire's multiply-shift with rejection and
//! sampling without replacement is a partial Fisher-Yates shuffle. All three
//! pieces are fixed so plans are byte-identical across platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Algorithm name recorded in every plan.
pub const RNG_ALGORITHM: &str = "chacha20/lemire/partial-fisher-yates";

pub struct PlanRng {
    inner: ChaCha20Rng,
}

impl PlanRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Moves a uniform sample of `m` items (without replacement) to the front
    /// of `items` and returns it, in draw order.
    pub fn partial_shuffle<'a, T>(&mut self, items: &'a mut [T], m: usize) -> &'a mut [T] {
        let m = m.min(items.len());
        for i in 0..m {
            let j = i + self.below((items.len() - i) as u64) as usize;
            items.swap(i, j);
        }
        &mut items[..m]
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
