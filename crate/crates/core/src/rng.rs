//! Seeded random streams.
//!
//! Every parallel worker draws from its own stream keyed by `(seed, index)`, so
//! results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for work item `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Salts used to keep logically distinct consumers of one seed apart.
pub(crate) mod salt {
    pub const INIT: u64 = 0x1001;
    pub const SHUFFLE: u64 = 0x2002;
    pub const DATA_TRAIN: u64 = 0x3003;
    pub const DATA_TEST: u64 = 0x3004;
    pub const DATA_CENTERS: u64 = 0x3005;
    pub const DIRECTIONS: u64 = 0x4004;
    pub const SCALING: u64 = 0x5005;
}

pub(crate) fn salted(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
