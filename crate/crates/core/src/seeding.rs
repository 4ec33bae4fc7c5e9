//! Deterministic seed streams. Every random consumer derives its generator
//! from `(base seed, tag, index)` so runs never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags. Distinct tags keep the streams independent.
pub mod tag {
    pub const FLEET: u64 = 1;
    pub const WORKLOAD: u64 = 2;
    pub const ACTOR_INIT: u64 = 3;
    pub const CRITIC_INIT: u64 = 4;
    pub const POLICY: u64 = 5;
    pub const TOPOLOGY: u64 = 6;
    pub const GOSSIP: u64 = 7;
    pub const ADVERSARY: u64 = 8;
    pub const WARMUP: u64 = 9;
    pub const EVAL: u64 = 10;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub fn stream(base: u64, tag: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tag, index))
}
