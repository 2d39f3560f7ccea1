//! Seed derivation shared by every randomized stage.
//!
//! Child seeds are derived with the SplitMix64 finalizer so a sample's random
//! stream depends only on `(parent seed, index)`, never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for APR-S chain sampling.
pub const STREAM_SINGLE: u64 = 0x5349_4e47_4c45_0001;
/// Stream tag for the APR-P shuffle permutation.
pub const STREAM_PERMUTATION: u64 = 0x5045_524d_0000_0002;
/// Stream tag for APR-P per-sample application draws.
pub const STREAM_PAIR: u64 = 0x5041_4952_0000_0003;
/// Stream tag for the standard flip/crop stage.
pub const STREAM_STANDARD: u64 = 0x5354_4444_0000_0004;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of child `index` from `parent`.
pub fn mix(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
