//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`SeededRng`], a ChaCha
//! stream cipher with 8 rounds (`rand_chacha::ChaCha8Rng`). Its output is
//! specified independently of platform and word size, so a seed reproduces
//! the same data everywhere. Independent sub-streams are derived from a
//! base seed with the SplitMix64 finalizer.

use rand::SeedableRng;

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` of `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

/// Hash of a seed together with the bit patterns of a float slice.
pub fn hash_floats(seed: u64, xs: &[f64]) -> u64 {
    xs.iter().fold(mix64(seed), |h, x| mix64(h ^ x.to_bits()))
}
