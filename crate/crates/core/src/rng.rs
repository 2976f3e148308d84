//! Seed derivation for reproducible random substreams.
//!
//! Every stochastic stage draws from its own ChaCha8 stream whose seed is a
//! pure function of `(master seed, stage tag, index)`:
//!
//! ```text
//! stage_seed = splitmix64(master ^ fnv1a64(tag))
//! stream_seed = splitmix64(stage_seed ^ splitmix64(index))
//! ```
//!
//! Streams therefore never depend on thread scheduling or on how many draws
//! another stage consumed, which is what lets paired A/B arms and parallel
//! data generation reproduce serial results bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed of the `index`-th substream of stage `tag`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let stage = splitmix64(master ^ fnv1a64(tag.as_bytes()));
    splitmix64(stage ^ splitmix64(index))
}

pub fn stream(master: u64, tag: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, tag, index))
}
