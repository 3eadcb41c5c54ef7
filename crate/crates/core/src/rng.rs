//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 streams derived from a
//! `(seed, stream)` pair so that independent consumers (k-means restarts,
//! synthetic episodes) are reproducible in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    // random::<f64>() is in [0, 1); shift to (0, 1] for the logarithm
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    crate::math::sqrt(-2.0 * crate::math::ln(u1)) * crate::math::cos(core::f64::consts::TAU * u2)
}

pub fn normal(rng: &mut SeededRng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    mean + sigma * standard_normal(rng)
}

/// SplitMix64 finaliser; used for deterministic label hashing.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
