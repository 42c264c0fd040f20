//! Feature construction for the five input configurations.

mod embed;
mod matrix;
mod ngram;
mod preprocess;

pub use embed::{
    context_window, embed_segment, segment_text, EmbeddingProvider, HashingEmbedder, PrecomputedEmbeddings,
    DEFAULT_DIM, WINDOW_RADIUS, WINDOW_SLOTS,
};
pub use matrix::{build_matrix, column_names, ColumnDescriptor, FeatureMatrix, FeatureStore, VocabSource};
pub use ngram::{log_ngrams, LogToken, Vocabulary};
pub use preprocess::{fit_preprocessor, Preprocessor};

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifies a segment across the pipeline, rendered `session_id:index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub session_id: String,
    pub index: usize,
}

impl SegmentKey {
    pub fn new(session_id: impl Into<String>, index: usize) -> Self {
        SegmentKey { session_id: session_id.into(), index }
    }

    pub fn of(segment: &crate::fusion::Segment) -> Self {
        SegmentKey::new(segment.session_id.clone(), segment.index)
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.session_id, self.index)
    }
}

impl FromStr for SegmentKey {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (session, index) = s.rsplit_once(':').ok_or_else(|| FeatureError::BadKey(s.into()))?;
        let index = index.parse().map_err(|_| FeatureError::BadKey(s.into()))?;
        Ok(SegmentKey::new(session, index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureConfig {
    TextOnly,
    TextWithContext,
    LogOnly,
    LogAndText,
    LogAndTextContext,
}

impl FeatureConfig {
    pub const ALL: [FeatureConfig; 5] = [
        FeatureConfig::TextOnly,
        FeatureConfig::TextWithContext,
        FeatureConfig::LogOnly,
        FeatureConfig::LogAndText,
        FeatureConfig::LogAndTextContext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureConfig::TextOnly => "text_only",
            FeatureConfig::TextWithContext => "text_with_context",
            FeatureConfig::LogOnly => "log_only",
            FeatureConfig::LogAndText => "log_and_text",
            FeatureConfig::LogAndTextContext => "log_and_text_context",
        }
    }

    /// Embedding slots per row: 0, 1, or the five-segment window.
    pub fn text_slots(self) -> usize {
        match self {
            FeatureConfig::LogOnly => 0,
            FeatureConfig::TextOnly | FeatureConfig::LogAndText => 1,
            FeatureConfig::TextWithContext | FeatureConfig::LogAndTextContext => WINDOW_SLOTS,
        }
    }

    pub fn uses_log(self) -> bool {
        matches!(
            self,
            FeatureConfig::LogOnly | FeatureConfig::LogAndText | FeatureConfig::LogAndTextContext
        )
    }

    /// Row width for embedding dimension `dim` and vocabulary size `vocab`.
    pub fn width(self, dim: usize, vocab: usize) -> usize {
        self.text_slots() * dim + if self.uses_log() { vocab } else { 0 }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureConfig {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureConfig::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| FeatureError::UnknownConfig(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("embedding provider failed for segment {0}")]
    ProviderFailure(String),
    #[error("embedding for {key} has {got} values, expected {expected}")]
    DimensionMismatch { key: String, got: usize, expected: usize },
    #[error("embedding for {0} contains a non-finite value")]
    NonFinite(String),
    #[error("log features requested but no vocabulary supplied")]
    VocabMissing,
    #[error("cannot fit preprocessing on an empty training set")]
    EmptyTrainingSet,
    #[error("matrix width {got} does not match fitted width {expected}")]
    WidthMismatch { got: usize, expected: usize },
    #[error("unknown feature configuration {0:?}")]
    UnknownConfig(String),
    #[error("malformed segment key {0:?}")]
    BadKey(String),
    #[error("segment {0} is not in the feature store")]
    UnknownSegment(String),
}
