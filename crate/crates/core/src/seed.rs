//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by the master seed plus a short
//! path of counters (replicate index, component index, pipeline tag). The
//! derived 64-bit seed depends only on that key, so replicates can be
//! generated in any order or on any thread and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a counter path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix(master.wrapping_add(GOLDEN));
    for (depth, &c) in path.iter().enumerate() {
        state = mix(state ^ mix(c.wrapping_add(GOLDEN.wrapping_mul(depth as u64 + 2))));
    }
    state
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags used by the harnesses so that distinct pipelines never share
/// randomness.
pub mod tags {
    pub const PATH: u64 = 1;
    pub const LIMIT_PATH: u64 = 2;
    pub const LIMIT_W: u64 = 3;
    pub const ORACLE: u64 = 4;
}
