//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit
//! key is derived from a tuple of integers (master seed, item index, stream
//! id, ...). Two calls with the same key tuple produce the same stream no
//! matter which thread runs them or in what order, so generation, bootstrap
//! and permutation loops can be parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers used across the crate. Changing any of these changes
/// every synthetic cohort, so they are fixed constants.
pub mod stream {
    pub const COVARIATES: u64 = 0x01;
    pub const EVENT_TIME: u64 = 0x02;
    pub const CENSORING: u64 = 0x03;
    pub const WAVEFORM: u64 = 0x04;
    pub const SITE: u64 = 0x05;
    pub const AUGMENT: u64 = 0x10;
    pub const SHUFFLE: u64 = 0x11;
    pub const INIT: u64 = 0x12;
    pub const DROPOUT: u64 = 0x13;
    pub const BOOTSTRAP: u64 = 0x20;
    pub const PERMUTATION: u64 = 0x21;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds a deterministic generator from a key tuple.
pub fn keyed(key: &[u64]) -> ChaCha8Rng {
    let mut state = 0x6A09_E667_F3BC_C908_u64 ^ (key.len() as u64);
    for &k in key {
        state = splitmix64(state ^ splitmix64(k));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        state = splitmix64(state.wrapping_add(i as u64));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
