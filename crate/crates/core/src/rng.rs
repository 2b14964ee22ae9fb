//! Seeded random streams.
//!
//! All randomness in the crate comes from ChaCha8 generators. Independent
//! streams (weight init, per-epoch shuffles, bootstrap resamples, ...) are
//! keyed by mixing a base seed with a stream tag and an index through
//! SplitMix64, so no two consumers share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags.
pub mod stream {
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const PROBE: u64 = 0x5052_4f42;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(tag)) ^ index)
}

pub fn rng_for(base: u64, tag: u64, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}
