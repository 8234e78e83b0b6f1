//! Keyed deterministic random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, tag)`. The key is
//! the SHA-256 digest of both, fed to a ChaCha8 generator, so a stream depends
//! only on integer state and is identical across platforms and thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, tag: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
