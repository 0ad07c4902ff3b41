//! Deterministic seed derivation.
//!
//! Every random stream in an experiment is a [`SimRng`] seeded from
//! `mix_seed(experiment_seed, &[domain tag, ...])`. The mixer folds each part
//! through the SplitMix64 finalizer, so seeds for different domains, hypotheses
//! or trial indices are decorrelated and any single trial can be replayed in
//! isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and an ordered list of parts.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(h))))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Purpose tags that keep seed domains disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedDomain {
    Evaluation = 0x4556_414c,
    Training = 0x5452_4149,
    Projection = 0x5052_4f4a,
    Upsilon = 0x5550_5349,
    Scatter = 0x5343_4154,
    Moments = 0x4d4f_4d45,
}

impl SeedDomain {
    pub fn tag(self) -> u64 {
        self as u64
    }
}
