use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::SegmentKey;
use crate::fusion::{CognitiveAction, Segment, TaskContext};

pub const MAX_ORDER: usize = 3;

/// A log-derived feature: an action n-gram or the segment's context indicator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LogToken {
    Gram(Vec<CognitiveAction>),
    Context(TaskContext),
}

impl fmt::Display for LogToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogToken::Gram(g) => {
                for (i, a) in g.iter().enumerate() {
                    if i > 0 {
                        f.write_str(">")?;
                    }
                    f.write_str(a.as_str())?;
                }
                Ok(())
            }
            LogToken::Context(c) => write!(f, "ctx:{}", c.as_str()),
        }
    }
}

/// Counts of 1- to 3-grams over the segment's action sequence, plus one
/// context indicator. Empty for a segment without actions.
pub fn log_ngrams(segment: &Segment) -> BTreeMap<LogToken, u32> {
    let seq: Vec<CognitiveAction> = segment.actions.iter().map(|a| a.action).collect();
    let mut counts = BTreeMap::new();
    if seq.is_empty() {
        return counts;
    }
    for n in 1..=MAX_ORDER {
        for w in seq.windows(n) {
            *counts.entry(LogToken::Gram(w.to_vec())).or_insert(0) += 1;
        }
    }
    counts.insert(LogToken::Context(segment.context), 1);
    counts
}

/// Log tokens seen in the rows a model trains on, frozen for every other row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    index: BTreeMap<LogToken, usize>,
    tokens: Vec<LogToken>,
    fit_keys: Vec<SegmentKey>,
}

impl Vocabulary {
    pub fn fit<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> Self {
        let mut seen = BTreeMap::new();
        let mut fit_keys = Vec::new();
        for s in segments {
            fit_keys.push(SegmentKey::of(s));
            for token in log_ngrams(s).into_keys() {
                seen.insert(token, 0usize);
            }
        }
        let tokens: Vec<LogToken> = seen.into_keys().collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Vocabulary { index, tokens, fit_keys }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[LogToken] {
        &self.tokens
    }

    /// Rows the vocabulary was fitted on.
    pub fn fit_keys(&self) -> &[SegmentKey] {
        &self.fit_keys
    }

    pub fn position(&self, token: &LogToken) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Counts projected onto the vocabulary; unseen tokens are dropped.
    pub fn project_into(&self, counts: &BTreeMap<LogToken, u32>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        out.iter_mut().for_each(|x| *x = 0.0);
        for (token, &c) in counts {
            if let Some(i) = self.position(token) {
                out[i] = f64::from(c);
            }
        }
    }

    pub fn descriptors(&self) -> impl Iterator<Item = String> + '_ {
        use alloc::string::ToString;
        self.tokens.iter().map(|t| t.to_string())
    }
}
