//! Seeded random streams.
//!
//! Every `(domain, split, variable)` triple reads from its own ChaCha8
//! stream under the experiment seed, so adding a variable or a split never
//! shifts the draws of the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn code(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Stream identifiers of the generated variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    U,
    W,
    X,
    C,
    Y,
    /// additional noise used by a single scenario
    Aux(u8),
}

impl Stream {
    fn code(self) -> u64 {
        match self {
            Stream::U => 0,
            Stream::W => 1,
            Stream::X => 2,
            Stream::C => 3,
            Stream::Y => 4,
            Stream::Aux(k) => 16 + k as u64,
        }
    }
}

/// Domain identifier used for target-domain streams.
pub const TARGET_STREAM: u32 = u32::MAX;

pub fn stream(seed: u64, domain: u32, split: Split, var: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 32) | (split.code() << 8) | var.code());
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// `1 / (1 + exp(-t))` without overflow for any finite `t`.
pub fn sigmoid(t: f64) -> f64 {
    0.5 * (1.0 + (0.5 * t).tanh())
}
