//! Deterministic per-task random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator whose seed
//! is derived from `(base seed, purpose, index)`. Work can therefore be split
//! across samples in any order without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Values are part of the on-disk determinism contract.
pub mod purpose {
    pub const PATHS: u64 = 0x5041_5448;
    pub const UE_POSITION: u64 = 0x5545_504f;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SNR_DRAW: u64 = 0x534e_5244;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a purpose tag and an index into a new seed.
pub fn derive_seed(base: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ purpose) ^ index)
}

pub fn stream(base: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}
