//! Seed derivation and the crate's reference RNG.
//!
//! All randomized stages draw from [`ChaCha8Rng`] seeded with
//! `SeedableRng::seed_from_u64`. Per-object streams use [`derive_seed`], so
//! results do not depend on processing order or worker count.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for `(global seed, object id)`; FNV-1a over the id
/// bytes followed by a SplitMix64 finalizer.
pub fn derive_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(h ^ mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
