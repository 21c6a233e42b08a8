//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`stream_rng`]: a ChaCha8
//! generator keyed by a 64-bit base seed, with the 64-bit ChaCha stream id
//! selecting an independent sub-sequence. Runs indexed by `(base_seed,
//! run_index)` are therefore reproducible and mutually independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng
}
