//! Seeded random streams.
//!
//! Every randomized operation draws from its own ChaCha8 stream, derived from
//! the user seed plus a fixed per-operation stream id. ChaCha is portable and
//! counter-based, so identical `(seed, stream)` pairs produce identical draws
//! on every platform, and two operations sharing a seed never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the randomized operations in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sources = 1,
    Mixing = 2,
    Shuffle = 3,
    FeedforwardInit = 4,
    RotationInit = 5,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
