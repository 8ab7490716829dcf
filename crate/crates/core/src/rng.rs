//! Counter-based random streams.
//!
//! Every independent unit of random work (one walk, one masking plan, one
//! training epoch, ...) draws from its own ChaCha8 generator keyed by
//! `(seed, domain, a, b)`. Results therefore do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const WALKS: u64 = 1;
pub const DOCUMENT: u64 = 2;
pub const DOCUMENT_LENGTH: u64 = 3;
pub const MASKING: u64 = 4;
pub const INIT: u64 = 5;
pub const SHUFFLE: u64 = 6;
pub const DROPOUT: u64 = 7;
pub const SPLIT: u64 = 8;
pub const ANALYSIS: u64 = 9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for the unit of work `(a, b)` in `domain`.
pub fn stream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed);
    for (i, word) in [domain, a, b, 0x746f_6b65_6e77_616c]
        .into_iter()
        .enumerate()
    {
        state = splitmix64(state ^ word);
        key[i * 8..(i + 1) * 8].copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
