//! Seeded random streams.
//!
//! Every generator is ChaCha20. Trial `t` of a run with master seed `s` uses
//! the seed `s ^ t`, so trials can run in any order or in parallel and still
//! reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::C64;

pub type Rng = ChaCha20Rng;

pub fn trial_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Generator for `(seed, stream)`; distinct streams are independent.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Vector of independent standard complex Gaussians (real and imaginary parts
/// each of variance 1/2).
pub fn complex_gaussians(rng: &mut Rng, len: usize) -> Vec<C64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re * scale, im * scale)
        })
        .collect()
}
