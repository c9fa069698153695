//! Seed derivation.
//!
//! Every random stream in the toolkit is derived from one root seed:
//! `derive_seed(root, stream)` mixes the stream tag into the root with
//! SplitMix64. Per-entity streams (users, sessions) then add the entity
//! index to the derived base, so a parallel run over users draws exactly
//! the same numbers as a serial one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_CATALOG: u64 = 1;
pub const STREAM_SESSIONS: u64 = 2;
pub const STREAM_USERS: u64 = 3;
pub const STREAM_TRAINING: u64 = 4;
pub const STREAM_NOISE: u64 = 5;
pub const STREAM_SPLIT: u64 = 6;
pub const STREAM_ROLLOUT: u64 = 7;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream))
}

/// Seed for entity `index` within a stream: `base + index`.
pub fn entity_seed(root: u64, stream: u64, index: u64) -> u64 {
    derive_seed(root, stream).wrapping_add(index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
