//! Seeded random streams.
//!
//! Every random draw goes through ChaCha8 seeded with a 64-bit seed. Sample
//! `i` of an experiment uses stream `i` of that generator, so results do not
//! depend on how samples are scheduled across threads.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Complex Gaussian with independent standard normal real and imaginary
/// parts.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<c64> {
    (0..n).map(|_| complex_gaussian(rng)).collect()
}
