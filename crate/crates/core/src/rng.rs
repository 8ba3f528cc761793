//! Seeded random streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream
//! derived from the run seed, so adding draws in one subsystem never shifts
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Mobility = 1,
    Placement = 2,
    Arrivals = 3,
    Execution = 4,
    TieBreak = 5,
}

pub fn stream(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-node sub-stream of the mobility stream.
pub fn node_stream(seed: u64, node: usize) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(1000 + node as u64);
    rng
}
