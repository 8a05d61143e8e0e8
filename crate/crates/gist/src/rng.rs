//! Seeded RNG construction. All stochastic stages derive their generator
//! from a global seed plus a stage label so runs are reproducible and
//! stages are decorrelated.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash; stable across platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic generator for (seed, label). Distinct labels give
/// independent streams from the same global seed.
pub fn seeded(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(label.as_bytes()))
}
