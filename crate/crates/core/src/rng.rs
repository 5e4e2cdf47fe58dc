//! Seeded random streams.
//!
//! Every sampler in this crate draws from a [`ChaCha8Rng`] built from a
//! `(seed, stream)` pair. ChaCha exposes 2^64 independent streams per key, so
//! use sites derive their own stream id instead of sharing a generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// A reproducible random stream identified by a seed and a stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Builds the generator for this stream. Identical `(seed, stream)`
    /// pairs always produce identical draws.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A child stream keyed by `labels`, sharing this stream's seed.
    pub fn substream(&self, labels: &[u64]) -> Self {
        let mut id = mix(self.stream ^ 0x6a09_e667_f3bc_c908);
        for &label in labels {
            id = mix(id ^ mix(label));
        }
        Self { seed: self.seed, stream: id }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit id for a short text label (FNV-1a).
pub fn label_id(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

const INVERSION_LIMIT: f64 = 10.0;

/// Draws from Poisson(`mean`). Inversion by sequential search below mean 10,
/// the `rand_distr` rejection sampler above. A zero or negative mean yields 0.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut mass = (-mean).exp();
        let mut cdf = mass;
        while u > cdf {
            k += 1;
            mass *= mean / k as f64;
            cdf += mass;
            // cdf can stall a few ulps short of 1
            if mass < f64::MIN_POSITIVE || k > 200 {
                break;
            }
        }
        k
    } else {
        let dist = Poisson::new(mean).expect("finite positive mean");
        dist.sample(rng) as u64
    }
}
