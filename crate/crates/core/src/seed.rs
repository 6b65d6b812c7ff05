//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by `(global_seed, index)` so the
//! output of a generator never depends on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit stream key from a global seed and an index.
pub fn derive(global_seed: u64, index: u64) -> u64 {
    mix64(mix64(global_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Derive a key for a named sub-stream (e.g. "shuffle", "mix").
pub fn derive_named(global_seed: u64, name: &str, index: u64) -> u64 {
    let tag = name
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3));
    derive(global_seed ^ tag, index)
}

pub fn stream(global_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(global_seed, index))
}

pub fn named_stream(global_seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_named(global_seed, name, index))
}
