//! Pinned random streams.
//!
//! Every chain and every scenario draws from ChaCha8 keyed by the user seed,
//! with a distinct stream id per purpose, so results are identical across
//! platforms and independent of `rand`'s default generator choice.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scenario = 1,
    Trees = 2,
    Errors = 3,
    /// Offset added to the other ids for a companion plain-BART chain.
    Companion = 16,
}

pub fn stream(seed: u64, id: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn stream_for(seed: u64, which: Stream) -> ChainRng {
    stream(seed, which as u64)
}
