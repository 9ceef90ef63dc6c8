//! Seed derivation. Every random stream in an experiment is a pure function
//! of the master seed and an integer key, so results do not depend on the
//! order in which parallel workers pick up tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, a bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Seed keyed by a lattice site, for random-access field generation.
pub fn site_seed(seed: u64, coords: [i64; 3]) -> u64 {
    let mut h = mix64(seed ^ 0x5851_f42d_4c95_7f2d);
    for c in coords {
        h = mix64(h ^ (c as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    h
}

/// Uniform value in `[0, 1)` from 53 hashed bits.
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child streams for named purposes inside one sample.
pub mod stream {
    pub const FIELD: u64 = 1;
    pub const PATCHES: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
}
