//! Counter-keyed random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by a
//! `(seed, substream, index)` triple. The seed and substream tag form the
//! key, the index selects the ChaCha stream, and draws within a stream
//! advance the block counter. Two workers that ask for the same triple
//! observe the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Named substreams derived from one top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    /// Brownian drivers of Itô paths; index = Monte Carlo path.
    Path = 1,
    /// Weight initialization; index = depth or replicate.
    Init = 2,
    /// Minibatch shuffling.
    Shuffle = 3,
    /// Synthetic dataset inputs.
    Data = 4,
    /// Per-layer delta signs.
    Delta = 5,
    /// Anything else a caller wants to keep separate (tests, probes).
    Aux = 6,
}

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, substream: Substream, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(substream as u64).to_le_bytes());
    // constant tail so that an all-zero seed still gives a non-trivial key
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
