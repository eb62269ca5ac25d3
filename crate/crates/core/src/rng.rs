//! Seeding.
//!
//! Every simulation takes a `u64` seed and drives a [`ChaCha8Rng`] from it.
//! Experiments derive per-replication seeds from one master seed with a
//! counter scheme: replication `i`, stream `s` gets
//! `splitmix64(master ^ splitmix64(i * STREAMS + s))`, so any replication can be
//! replayed on its own and replications can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named sub-streams of a replication.
pub mod stream {
    pub const RATE_PATH: u64 = 0;
    pub const ARRIVALS: u64 = 1;
}

const STREAMS: u64 = 16;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for `stream` of replication `replication` under `master`.
pub fn derive_seed(master: u64, replication: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(replication.wrapping_mul(STREAMS).wrapping_add(stream)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
