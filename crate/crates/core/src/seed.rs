//! Labeled seed derivation.
//!
//! Every stream of randomness is keyed by the run seed plus a fixed label, so
//! one stream never shifts when another consumer draws more numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifier written into run sidecars so trajectories can be replayed.
pub const PRNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64)";

/// Label used by the CLI for the anisotropy / informativity token sample.
pub const TOKEN_SAMPLE_LABEL: &str = "token-sample";

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"isolab-seed-v1\0");
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}
