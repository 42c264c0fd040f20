//! Seed derivation for independent deterministic streams.
//!
//! Every random decision in the pipeline draws from a ChaCha stream keyed by
//! `derive(global_seed, path)`, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One round of SplitMix64.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a task id into a seed.
pub fn mix(seed: u64, task: u64) -> u64 {
    splitmix64(seed ^ splitmix64(task.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Folds a path of task ids into a seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |acc, &t| mix(acc, t))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit FNV-1a, used where a hash must not vary across platforms or releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
