use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureError, SegmentKey};
use crate::fusion::Segment;
use crate::seed::fnv1a;

/// Output width of the sentence-embedding model the pipeline was designed around.
pub const DEFAULT_DIM: usize = 384;
pub const WINDOW_RADIUS: usize = 2;
pub const WINDOW_SLOTS: usize = 2 * WINDOW_RADIUS + 1;

/// Maps segment text to a fixed-width vector. Equal inputs must give equal outputs.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    fn embed(&self, key: &SegmentKey, text: &str) -> Result<Vec<f64>, FeatureError>;
}

/// Deterministic signed feature hashing over whitespace tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in text.split_whitespace() {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, _key: &SegmentKey, text: &str) -> Result<Vec<f64>, FeatureError> {
        Ok(self.embed_text(text))
    }
}

/// Vectors computed offline by an external model, looked up by segment key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize) -> Self {
        PrecomputedEmbeddings { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<(), FeatureError> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(FeatureError::DimensionMismatch { key, got: vector.len(), expected: self.dim });
        }
        if !vector.iter().all(|x| x.is_finite()) {
            return Err(FeatureError::NonFinite(key));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, key: &SegmentKey, _text: &str) -> Result<Vec<f64>, FeatureError> {
        let key = key.to_string();
        self.vectors.get(&key).cloned().ok_or(FeatureError::ProviderFailure(key))
    }
}

/// Utterance texts of a segment in time order, joined by single spaces.
pub fn segment_text(segment: &Segment) -> String {
    let mut out = String::new();
    for u in &segment.utterances {
        let t = u.text.trim();
        if t.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Embeds a segment's joined text once. Segments without utterances get the zero vector.
pub fn embed_segment(segment: &Segment, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, FeatureError> {
    let dim = provider.dimension();
    if segment.utterances.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    let key = SegmentKey::of(segment);
    let v = provider.embed(&key, &segment_text(segment))?;
    if v.len() != dim {
        return Err(FeatureError::DimensionMismatch { key: key.to_string(), got: v.len(), expected: dim });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(FeatureError::NonFinite(key.to_string()));
    }
    Ok(v)
}

/// Concatenates the embeddings at `i-2 ..= i+2` of one session's segments,
/// zero-padding positions outside the session.
pub fn context_window(embeddings: &[Vec<f64>], i: usize) -> Vec<f64> {
    let dim = embeddings[i].len();
    let mut out = Vec::with_capacity(WINDOW_SLOTS * dim);
    for slot in 0..WINDOW_SLOTS {
        match (i + slot).checked_sub(WINDOW_RADIUS).and_then(|j| embeddings.get(j)) {
            Some(e) => out.extend_from_slice(e),
            None => out.resize(out.len() + dim, 0.0),
        }
    }
    out
}
