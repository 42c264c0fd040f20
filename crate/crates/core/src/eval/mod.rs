//! Nested group-wise cross-validation with per-code one-vs-rest training.

mod audit;
mod folds;
mod outer;
mod search;

pub use audit::{check_leakage, ModelAudit, ModelRole, Violation};
pub use folds::{carve_early_stop, plan_folds, FoldPlan, OuterFold};
pub use outer::{
    labeled_sessions, matrix_cells, run_cell, run_matrix, run_outer, CellResult, CellSpec, EvalResult, FoldSummary,
    PooledPrediction,
};
pub use search::{inner_search, search_candidates, HyperSample, SearchOutcome};

use alloc::string::String;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::nn::{ClassWeights, NnError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least {needed} sessions, found {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("{scope} contains a single class")]
    SingleClass { scope: String },
    #[error("every inner fold was single-class")]
    DegenerateInnerFold,
    #[error("no early-stopping split of {sessions} sessions leaves both classes on both sides")]
    DegenerateSplit { sessions: usize },
    #[error("pooled predictions contain a single class")]
    PooledSingleClass,
    #[error("no hyperparameter candidates")]
    NoCandidates,
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl EvalError {
    /// Short tag for report cells.
    pub fn reason(&self) -> &'static str {
        match self {
            EvalError::TooFewGroups { .. } => "too_few_sessions",
            EvalError::SingleClass { .. } | EvalError::PooledSingleClass => "single_class",
            EvalError::DegenerateInnerFold => "degenerate_inner_folds",
            EvalError::DegenerateSplit { .. } => "degenerate_split",
            EvalError::NoCandidates => "no_candidates",
            EvalError::Features(_) => "features",
            EvalError::Network(_) => "network",
            EvalError::Metrics(MetricsError::TooDegenerate { .. }) => "degenerate_bootstrap",
            EvalError::Metrics(_) => "metrics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub outer_folds: usize,
    pub inner_folds: usize,
    /// Hyperparameter samples drawn per outer fold.
    pub budget: usize,
    /// Share of training sessions held out for early stopping.
    pub early_stop_fraction: f64,
    pub max_epochs: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            outer_folds: 3,
            inner_folds: 3,
            budget: 10,
            early_stop_fraction: 0.2,
            max_epochs: crate::nn::MAX_EPOCHS,
            resamples: crate::metrics::DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

/// Inverse-frequency weights `N / (2·N_c)`.
pub fn class_weights(labels: &[bool]) -> Result<ClassWeights, EvalError> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(EvalError::SingleClass { scope: "training rows".into() });
    }
    Ok(ClassWeights { pos: n / (2.0 * pos), neg: n / (2.0 * neg) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn labels(pos: usize, neg: usize) -> Vec<bool> {
        core::iter::repeat_n(true, pos).chain(core::iter::repeat_n(false, neg)).collect()
    }

    #[test]
    fn class_weight_fixtures() {
        let w = class_weights(&labels(10, 30)).unwrap();
        assert_eq!(w.pos, 2.0);
        assert!((w.neg - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(class_weights(&labels(20, 20)).unwrap(), ClassWeights::UNIT);
        assert_eq!(class_weights(&labels(1, 39)).unwrap().pos, 20.0);
        assert!(matches!(class_weights(&labels(0, 5)), Err(EvalError::SingleClass { .. })));
    }
}
