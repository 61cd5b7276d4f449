//! Named random substreams derived from one master seed.
//!
//! Each consumer (factor initialization, fold shuffling, synthetic data) draws
//! from its own stream so that changing one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const INIT: &str = "init";
pub const FOLDS: &str = "folds";
pub const SYNTH: &str = "synth";

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
