use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::embed::{embed_segment, EmbeddingProvider, WINDOW_RADIUS, WINDOW_SLOTS};
use super::ngram::{log_ngrams, LogToken, Vocabulary};
use super::{FeatureConfig, FeatureError, SegmentKey};
use crate::fusion::Segment;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnDescriptor {
    /// Component of the embedding at relative segment `offset` (0 = current).
    Embedding { offset: i8, component: usize },
    Log(LogToken),
}

impl fmt::Display for ColumnDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnDescriptor::Embedding { offset, component } => write!(f, "emb[{offset:+}]:{component}"),
            ColumnDescriptor::Log(t) => write!(f, "log:{t}"),
        }
    }
}

/// Dense row-major matrix, one row per labeled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub width: usize,
    pub row_keys: Vec<SegmentKey>,
    pub columns: Vec<ColumnDescriptor>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_keys.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact on an empty width would panic
        self.values.chunks_exact(self.width.max(1)).take(self.n_rows())
    }
}

/// Which vocabulary a LOG configuration projects onto.
#[derive(Debug, Clone, Copy)]
pub enum VocabSource<'a> {
    Fixed(&'a Vocabulary),
    /// Fit on the rows being built.
    FitOnRows,
    Absent,
}

/// Fold-independent segment state: every segment's embedding, computed once.
pub struct FeatureStore<'a> {
    segments: &'a [Segment],
    embeddings: Vec<Vec<f64>>,
    dim: usize,
    position: BTreeMap<(&'a str, usize), usize>,
}

impl<'a> FeatureStore<'a> {
    pub fn new(segments: &'a [Segment], provider: &dyn EmbeddingProvider) -> Result<Self, FeatureError> {
        let embeddings = segments
            .iter()
            .map(|s| embed_segment(s, provider))
            .collect::<Result<Vec<_>, _>>()?;
        let position = segments
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.session_id.as_str(), s.index), i))
            .collect();
        Ok(FeatureStore { segments, embeddings, dim: provider.dimension(), position })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &'a [Segment] {
        self.segments
    }

    pub fn segment(&self, row: usize) -> &'a Segment {
        &self.segments[row]
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        &self.embeddings[row]
    }

    /// Positions of labeled segments, in store order.
    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.segments.len()).filter(|&i| self.segments[i].label.is_some()).collect()
    }

    pub fn row_of(&self, key: &SegmentKey) -> Option<usize> {
        self.position.get(&(key.session_id.as_str(), key.index)).copied()
    }

    pub fn fit_vocabulary(&self, rows: &[usize]) -> Vocabulary {
        Vocabulary::fit(rows.iter().map(|&r| &self.segments[r]))
    }

    /// The ±2 window around `row`, never leaving its session.
    pub fn window(&self, row: usize, out: &mut Vec<f64>) {
        let seg = &self.segments[row];
        for slot in 0..WINDOW_SLOTS {
            let neighbour = (seg.index + slot)
                .checked_sub(WINDOW_RADIUS)
                .and_then(|j| self.position.get(&(seg.session_id.as_str(), j)));
            match neighbour {
                Some(&n) => out.extend_from_slice(&self.embeddings[n]),
                None => out.resize(out.len() + self.dim, 0.0),
            }
        }
    }

    pub fn matrix(
        &self,
        rows: &[usize],
        config: FeatureConfig,
        vocab: Option<&Vocabulary>,
    ) -> Result<FeatureMatrix, FeatureError> {
        let vocab = match (config.uses_log(), vocab) {
            (true, None) => return Err(FeatureError::VocabMissing),
            (true, Some(v)) => Some(v),
            (false, _) => None,
        };
        let width = config.width(self.dim, vocab.map_or(0, Vocabulary::len));
        let mut values = Vec::with_capacity(rows.len() * width);
        let mut log_buf = vec![0.0; vocab.map_or(0, Vocabulary::len)];
        for &r in rows {
            match config.text_slots() {
                0 => {}
                1 => values.extend_from_slice(&self.embeddings[r]),
                _ => self.window(r, &mut values),
            }
            if let Some(v) = vocab {
                v.project_into(&log_ngrams(&self.segments[r]), &mut log_buf);
                values.extend_from_slice(&log_buf);
            }
        }
        debug_assert_eq!(values.len(), rows.len() * width);

        let mut columns = Vec::with_capacity(width);
        let slots = config.text_slots();
        for slot in 0..slots {
            let offset = if slots == 1 { 0 } else { slot as i8 - WINDOW_RADIUS as i8 };
            columns.extend((0..self.dim).map(|component| ColumnDescriptor::Embedding { offset, component }));
        }
        if let Some(v) = vocab {
            columns.extend(v.tokens().iter().cloned().map(ColumnDescriptor::Log));
        }

        Ok(FeatureMatrix {
            values,
            width,
            row_keys: rows.iter().map(|&r| SegmentKey::of(&self.segments[r])).collect(),
            columns,
        })
    }

    pub fn rows_for(&self, keys: &[SegmentKey]) -> Result<Vec<usize>, FeatureError> {
        keys.iter()
            .map(|k| self.row_of(k).ok_or_else(|| FeatureError::UnknownSegment(k.to_string())))
            .collect()
    }
}

/// One row per labeled segment of `segments` under `config`.
pub fn build_matrix(
    segments: &[Segment],
    config: FeatureConfig,
    provider: &dyn EmbeddingProvider,
    vocab: VocabSource<'_>,
) -> Result<FeatureMatrix, FeatureError> {
    let store = FeatureStore::new(segments, provider)?;
    let rows = store.labeled_rows();
    let fitted;
    let vocab = match vocab {
        VocabSource::Fixed(v) => Some(v),
        VocabSource::FitOnRows => {
            fitted = store.fit_vocabulary(&rows);
            Some(&fitted)
        }
        VocabSource::Absent => None,
    };
    store.matrix(&rows, config, vocab)
}

/// Column names for CSV export.
pub fn column_names(matrix: &FeatureMatrix) -> Vec<String> {
    matrix.columns.iter().map(|c| format!("{c}")).collect()
}
