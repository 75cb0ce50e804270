//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by a
//! `(seed, stream)` pair, so independent trajectories never share state and
//! any run can be replayed from its seeds alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids are partitioned by purpose in the high bits.
pub mod purpose {
    pub const SUBORDINATOR: u64 = 1 << 56;
    pub const BROWNIAN: u64 = 2 << 56;
    pub const INITIAL: u64 = 3 << 56;
    pub const TEST_VECTORS: u64 = 4 << 56;
}

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for `(experiment, trajectory)` under a purpose tag.
pub fn stream_id(purpose: u64, experiment: u64, trajectory: u64) -> u64 {
    purpose | ((experiment & 0xff_ffff) << 32) | (trajectory & 0xffff_ffff)
}
