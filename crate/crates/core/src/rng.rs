//! Seed derivation for reproducible, schedule-independent randomness.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Child seeds are derived from a parent seed plus a stream tag and an
//! index, so work items can be run in any order (or in parallel) and still
//! see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Distinct tags keep unrelated child streams apart.
pub(crate) mod tag {
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const PROBE_SPLIT: u64 = 0x7072_6f62;
    pub const PROBE_SOLVER: u64 = 0x7073_6f6c;
    pub const REPETITION: u64 = 0x7265_7065;
    pub const METHOD: u64 = 0x6d65_7468;
    pub const DATASET: u64 = 0x6461_7461;
    pub const MONTE_CARLO: u64 = 0x6d63_7074;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of child stream `index` under `tag` from `parent`.
pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ tag) ^ index)
}
