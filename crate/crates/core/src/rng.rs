//! Seeded randomness.
//!
//! Every stochastic routine takes a `u64` seed and draws from ChaCha8, a
//! counter-based stream cipher generator whose output is fixed by its
//! specification, so a seed reproduces the same stream on every platform.
//! Gaussian variates come from `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a labelled sub-task of `seed`.
pub fn derive(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
