//! Reproducible random streams.
//!
//! Every replica owns a ChaCha stream selected by `(seed, replica)`, so
//! replicas can be run in any order or concurrently with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream for replica `replica` under master seed `seed`.
pub fn stream(seed: u64, replica: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}
