//! Keyed random streams.
//!
//! A stream is identified by the master seed, a domain label and any number
//! of key parts (replicate index, event id, variable). The key is hashed with
//! SHA-256 into a ChaCha8 seed, so a work item draws the same numbers whatever
//! thread runs it and in whatever order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Builder for a keyed stream.
#[derive(Clone)]
pub struct StreamKey {
    hasher: Sha256,
}

impl StreamKey {
    pub fn new(seed: u64, domain: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"floodrisk-stream-v1");
        hasher.update(seed.to_le_bytes());
        let key = StreamKey { hasher };
        key.with_str(domain)
    }

    pub fn with_u64(mut self, value: u64) -> Self {
        self.hasher.update([0x01]);
        self.hasher.update(value.to_le_bytes());
        self
    }

    pub fn with_str(mut self, value: &str) -> Self {
        self.hasher.update([0x02]);
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value.as_bytes());
        self
    }

    pub fn rng(self) -> StreamRng {
        let digest = self.hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}
