//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! master seed and positioned on a 64-bit stream id. ChaCha is counter based,
//! so distinct stream ids give independent sequences without any shared
//! state between replications.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SimRng = ChaCha8Rng;

/// What a stream is used for inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u64)]
pub enum Purpose {
    Arrivals = 0,
    Injection = 1,
    PairFileA = 2,
    PairFileB = 3,
    Probes = 4,
    Surrogate = 5,
    Fading = 6,
    Chain = 7,
    Queue = 8,
    Initial = 9,
}

/// Stream id for `(replication, purpose)`.
pub fn stream_id(replication: u64, purpose: Purpose) -> u64 {
    (replication << 8) | purpose as u64
}

/// Generator for stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replication_rng(seed: u64, replication: u64, purpose: Purpose) -> SimRng {
    stream_rng(seed, stream_id(replication, purpose))
}
