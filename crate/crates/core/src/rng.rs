//! Seeded noise substreams.
//!
//! Every Gaussian draw in the engine comes from a ChaCha stream keyed by the
//! run seed and selected by a `(step, iteration, purpose)` label, so the noise
//! a given step sees never depends on how many draws other steps made or on
//! which thread made them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// What a noise stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Injection,
    Reinjection,
    InitialNoise,
    CorpusCoefficients,
    PriorConstruction,
    Test,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Injection => 1,
            Purpose::Reinjection => 2,
            Purpose::InitialNoise => 3,
            Purpose::CorpusCoefficients => 4,
            Purpose::PriorConstruction => 5,
            Purpose::Test => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub step: u64,
    pub iteration: u64,
    pub purpose: Purpose,
}

impl StreamLabel {
    pub fn new(purpose: Purpose, step: u64, iteration: u64) -> Self {
        Self {
            step,
            iteration,
            purpose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseSeed(pub u64);

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl NoiseSeed {
    pub fn rng(self, label: StreamLabel) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        let stream = splitmix64(splitmix64(splitmix64(label.purpose.code()) ^ label.step) ^ label.iteration);
        rng.set_stream(stream);
        rng
    }

    /// `len` i.i.d. standard normal samples from the labelled substream.
    pub fn normals(self, label: StreamLabel, len: usize) -> Vec<f64> {
        let mut rng = self.rng(label);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Derives a child seed, e.g. one per corpus item.
    pub fn child(self, index: u64) -> NoiseSeed {
        NoiseSeed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0xA5A5))))
    }
}
