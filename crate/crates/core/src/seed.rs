// SPDX-License-Identifier: Apache-2.0

//! Seed handling for every stochastic operation.
//!
//! Generators are ChaCha20 streams keyed by `SHA-256(seed_le || label)`.
//! Labels let one user-facing seed fan out into independent streams
//! (per frame, per branch) without any shared state, so results never
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Name and version of the generator construction, recorded in manifests.
pub const GENERATOR_ID: &str = "chacha20-sha256-keyed/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleSeed(pub u64);

impl SampleSeed {
    pub const fn new(seed: u64) -> Self {
        Self(seed)
    }

    fn key(self, label: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.0.to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.finalize().into()
    }

    /// Derives a child seed for a named sub-stream.
    pub fn split(self, label: &str) -> SampleSeed {
        let key = self.key(label);
        let mut word = [0u8; 8];
        word.copy_from_slice(&key[..8]);
        SampleSeed(u64::from_le_bytes(word))
    }

    /// Generator for one operation. Distinct labels give independent streams.
    pub fn rng(self, label: &str) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key(label))
    }
}

impl From<u64> for SampleSeed {
    fn from(seed: u64) -> Self {
        Self(seed)
    }
}
