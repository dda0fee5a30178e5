use super::{SemanticEmbedding, EMBEDDING_DIM};
use crate::preprocess::NormalizedImage;
use sha2::{Digest, Sha256};

/// Deterministic stand-in for the vision tower: SHA-256 of `(seed, image
/// bytes)`, expanded in counter mode to 512 values in `[-1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct StubEncoder {
    seed: u64,
}

impl StubEncoder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode(&self, img: &NormalizedImage) -> SemanticEmbedding {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((img.width() as u64).to_le_bytes());
        h.update((img.height() as u64).to_le_bytes());
        h.update(img.to_le_bytes());
        let root = h.finalize();

        let mut values = Vec::with_capacity(EMBEDDING_DIM);
        for block in 0u32.. {
            let digest = Sha256::new().chain_update(root).chain_update(block.to_le_bytes()).finalize();
            for word in digest.chunks_exact(4) {
                let w = u32::from_le_bytes(word.try_into().expect("4-byte chunk"));
                values.push((f64::from(w) / f64::from(u32::MAX) * 2.0 - 1.0) as f32);
            }
            if values.len() >= EMBEDDING_DIM {
                break;
            }
        }
        values.truncate(EMBEDDING_DIM);
        SemanticEmbedding::new(values).expect("stub values are finite")
    }
}
