//! Seed derivation. Every stochastic step takes an explicit seed derived
//! from the campaign seed, so runs replay bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer over `seed ^ salt`.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(seed, a), b)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags keep independent consumers of one campaign seed apart.
pub mod stream {
    pub const SENSOR: u64 = 0x5e45;
    pub const MC_DROPOUT: u64 = 0x3cd0;
    pub const HUMAN_SELECT: u64 = 0x4a11;
    pub const PSEUDO_SELECT: u64 = 0x95e0;
    pub const TRAIN: u64 = 0x7a17;
    pub const EVAL: u64 = 0xe7a1;
}
