//! Deterministic seed derivation.
//!
//! Named sub-streams let experiments draw from one top-level seed without
//! perturbing each other; indexed streams give every Monte-Carlo sample its
//! own generator regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a, stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the sub-stream `name` of `seed`.
pub fn substream(seed: u64, name: &str) -> u64 {
    mix(seed ^ mix(fnv1a(name.as_bytes())))
}

/// Generator for item `index` of a family seeded by `seed`.
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
