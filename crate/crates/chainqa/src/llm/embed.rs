//! Deterministic character-trigram embedder.

use chainqa_core::client::{EmbedError, EmbeddingProvider};
use chainqa_core::rng::stable_hash;

pub const MIN_TRIGRAM_DIM: usize = 16;
pub const DEFAULT_TRIGRAM_DIM: usize = 256;

/// Scales `v` to unit length; `None` for the zero vector.
pub fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Lowercased character trigrams of the space-padded text, hashed into
/// `dim` buckets and unit-normalized.
#[derive(Clone, Debug)]
pub struct TrigramEmbedder {
    dim: usize,
    id: String,
}

impl TrigramEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_TRIGRAM_DIM {
            return Err(EmbedError::Malformed(format!("trigram dimension must be at least {MIN_TRIGRAM_DIM}, got {dim}")));
        }
        Ok(TrigramEmbedder { dim, id: format!("trigram-{dim}") })
    }
}

impl EmbeddingProvider for TrigramEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let chars: Vec<char> = format!(" {} ", text.trim().to_lowercase()).chars().collect();
        if chars.len() < 3 || text.trim().is_empty() {
            return Err(EmbedError::Malformed("cannot embed empty text".into()));
        }
        let mut v = vec![0.0; self.dim];
        for w in chars.windows(3) {
            let gram: String = w.iter().collect();
            v[(stable_hash(&gram) % self.dim as u64) as usize] += 1.0;
        }
        normalize(v).ok_or_else(|| EmbedError::Malformed("zero vector".into()))
    }
}
