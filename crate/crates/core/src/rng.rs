//! Seed splitting for reproducible, independent random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha stream whose seed is
//! derived from `(master seed, replication, purpose)`, so replications can run
//! in any order or in parallel and still produce identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Noise = 2,
    Perturbation = 3,
    FirstRound = 4,
    Optimism = 5,
    Schedule = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of one stream.
pub fn derive_seed(master: u64, replication: u64, stream: Stream) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ replication.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream_rng(master: u64, replication: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, replication, stream))
}
