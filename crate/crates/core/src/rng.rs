//! Seeded index sampling.
//!
//! Every stochastic choice of an example index goes through [`IndexSampler`]:
//! xoshiro256++ seeded from a `u64` through SplitMix64, with indices bounded
//! by Lemire's multiply-shift method and rejection of the biased low region.
//! Both steps use only 64-bit integer arithmetic, so the index sequence for a
//! given seed is the same on every platform.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub const RNG_ALGORITHM: &str =
    "xoshiro256++ (SplitMix64 seeding), Lemire multiply-shift bounding with rejection";

#[derive(Debug, Clone)]
pub struct IndexSampler {
    rng: Xoshiro256PlusPlus,
}

impl IndexSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "cannot sample from an empty range");
        let range = n as u64;
        let mut m = (self.rng.next_u64() as u128) * (range as u128);
        let mut low = m as u64;
        if low < range {
            let threshold = range.wrapping_neg() % range;
            while low < threshold {
                m = (self.rng.next_u64() as u128) * (range as u128);
                low = m as u64;
            }
        }
        (m >> 64) as usize
    }

    /// Uniform real in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Derives an independent child seed, used to give each trial or grid cell
/// its own stream.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The first `count` indices drawn for `seed` over `0..n`.
pub fn index_sequence(seed: u64, n: usize, count: usize) -> Vec<usize> {
    let mut s = IndexSampler::new(seed);
    (0..count).map(|_| s.next_index(n)).collect()
}
