//! Named random streams derived from a single scenario seed.
//!
//! Every consumer of randomness gets its own ChaCha stream so that adding
//! draws in one subsystem never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weather = 1,
    SoilNoise = 2,
    AirNoise = 3,
    Link = 4,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
