// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a seed derived
//! from `(master, stream, index)`. Work items own their stream, so results do not
//! depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, one per independent consumer of randomness.
pub mod stream {
    pub const PRIOR: u64 = 1;
    pub const INITIAL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const WINDOW: u64 = 4;
    pub const INIT_WEIGHTS: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const POSTERIOR: u64 = 7;
    pub const CORPUS: u64 = 8;
    pub const SEGMENT: u64 = 9;
    pub const SPLIT: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream tag and an item index.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub fn rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream, index))
}
