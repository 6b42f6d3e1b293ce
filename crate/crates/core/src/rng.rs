//! Seed derivation. Every random consumer gets its own ChaCha stream keyed by
//! the run seed and a purpose tag, so adding draws in one place never shifts
//! another component's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const TOPOLOGY: u64 = 0x746f_706f;
    pub const CHANNEL: u64 = 0x6368_616e;
    pub const ACTIONS: u64 = 0x6163_7473;
    pub const ESN_ALPHA: u64 = 0x6573_6e61;
    pub const ESN_BETA: u64 = 0x6573_6e62;
    pub const POLICY: u64 = 0x706f_6c69;
    pub const EXPECTATION: u64 = 0x6578_7063;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a purpose tag and an index into a new seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(tag)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn stream(base: u64, tag: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tag, index))
}
