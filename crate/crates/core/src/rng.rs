//! Counter-based random substreams.
//!
//! Every stochastic ensemble in the crate draws from `ChaCha8Rng` keyed by the
//! master seed, with the ChaCha stream id set to the trajectory (or block)
//! index. Two substreams never overlap and the output of substream `i` does
//! not depend on how many other substreams were consumed before it, so the
//! ensembles reduce to the same numbers on any number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for substream `index` of `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
