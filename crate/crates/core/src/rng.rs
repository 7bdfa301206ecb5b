//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from its own ChaCha stream keyed by a
//! master seed and a purpose label, so independent protocol phases stay
//! reproducible no matter which other draws happened first.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit child seed from `master` and a purpose label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let digest = digest(master, label);
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// Builds the generator for `(master, label)`.
pub fn stream(master: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(digest(master, label))
}

/// Generator seeded directly from a 64-bit seed.
pub fn from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn digest(master: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let out = hasher.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&out);
    bytes
}
