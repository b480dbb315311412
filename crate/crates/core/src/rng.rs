//! Seeded random streams.
//!
//! Every run and every grid task owns a `ChaCha8Rng`. Gaussian draws come from
//! `rand_distr::StandardNormal`, one per coordinate in component order `1..d`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Stream = ChaCha8Rng;

/// Recorded in experiment metadata.
pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng (seed_from_u64) + rand_distr::StandardNormal";

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of task `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

pub fn derived_stream(master: u64, index: u64) -> Stream {
    stream(derive_seed(master, index))
}

#[inline]
pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
