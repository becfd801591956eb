//! Seeded random streams.
//!
//! Every random draw in the crate comes from `ChaCha20Rng` (the ChaCha
//! stream cipher with 20 rounds, as implemented by `rand_chacha`), keyed by
//! a 64-bit seed through `SeedableRng::seed_from_u64`. ChaCha is a
//! counter-based generator, so streams are identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

pub fn stream(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and an ordered list of labels.
/// Distinct label lists give statistically independent streams.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix(base), |acc, &l| mix(acc ^ mix(l)))
}
