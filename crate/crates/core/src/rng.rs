//! Seedable, splittable random streams.
//!
//! Every stochastic routine takes an explicit generator. Monte Carlo trials
//! draw from `trial_rng(seed, i)`, which depends only on the master seed and
//! the trial index, so results do not depend on how trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for trial `index` under master `seed`.
pub fn trial_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
