//! Deterministic local embedding fallback: hashed bag-of-tokens projection.
//!
//! Each whitespace token hashes (SHA-256) to a seed that generates a fixed
//! pseudo-random unit vector; a text embeds as the mean of its first 512
//! token vectors. No model weights, no network — similar token multisets
//! give similar vectors, which is all offline dedup tests need. The
//! construction is fully portable: the same text yields bit-identical
//! vectors across processes, platforms, and builds.

use rand::Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::providers::{EmbeddingProvider, ProviderError};
use crate::similarity::EmbeddingVector;

/// Token cap mirroring the reference embedding model's input limit.
pub const TOKEN_CAP: usize = 512;

pub struct LocalHashEmbedding {
    name: String,
    dim: usize,
}

impl Default for LocalHashEmbedding {
    fn default() -> Self {
        LocalHashEmbedding::new(256)
    }
}

impl LocalHashEmbedding {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        LocalHashEmbedding {
            name: format!("local-hash-{dim}"),
            dim,
        }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        } else {
            values[0] = 1.0;
        }
        values
    }
}

impl EmbeddingProvider for LocalHashEmbedding {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "embed called with no texts".into(),
            ));
        }
        texts
            .iter()
            .map(|text| {
                let tokens: Vec<&str> = text.split_whitespace().take(TOKEN_CAP).collect();
                if tokens.is_empty() {
                    return Err(ProviderError::InvalidRequest(format!(
                        "cannot embed whitespace-only text {text:?}"
                    )));
                }
                let mut pooled = vec![0.0f64; self.dim];
                for token in &tokens {
                    for (slot, value) in pooled.iter_mut().zip(self.token_vector(token)) {
                        *slot += value;
                    }
                }
                let count = tokens.len() as f64;
                for slot in &mut pooled {
                    *slot /= count;
                }
                EmbeddingVector::new(pooled)
                    .map_err(|e| ProviderError::Protocol(format!("pooled vector: {e}")))
            })
            .collect()
    }

    fn name(&self) -> &str {
        &self.name
    }
}
