use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::audit::{ModelAudit, ModelRole};
use super::folds::FoldPlan;
use super::search::{search, search_candidates, HyperSample, Task};
use super::{EvalError, EvalSettings};
use crate::features::{FeatureConfig, FeatureStore, SegmentKey};
use crate::fusion::Segment;
use crate::ingestion::SsrlCode;
use crate::metrics::{bootstrap_ci, roc_auc, ConfidenceInterval, MetricsError};
use crate::seed;

const FINAL_STREAM: u64 = 0xf1a1;
const BOOT_STREAM: u64 = 0xb007;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledPrediction {
    pub key: SegmentKey,
    pub score: f64,
    pub label: bool,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub winner: HyperSample,
    pub winner_index: usize,
    pub candidate_mean_aucs: Vec<f64>,
    pub skipped_inner_folds: Vec<usize>,
    pub early_stop_sessions: Vec<String>,
    /// Test AUC of this fold alone, when its test rows hold both classes.
    pub test_auc: Option<f64>,
    pub stop_epoch: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub predictions: Vec<PooledPrediction>,
    pub auc: f64,
    pub ci: ConfidenceInterval,
    pub folds: Vec<FoldSummary>,
    #[serde(skip)]
    pub audits: Vec<ModelAudit>,
}

/// Sessions with at least one labeled segment, sorted.
pub fn labeled_sessions(segments: &[Segment]) -> Vec<String> {
    let ids: BTreeSet<&str> = segments.iter().filter(|s| s.label.is_some()).map(|s| s.session_id.as_str()).collect();
    ids.into_iter().map(String::from).collect()
}

/// Outer loop for one code and configuration: search, refit, score the held
/// out sessions, pool, and bootstrap.
pub fn run_outer(
    store: &FeatureStore<'_>,
    code: SsrlCode,
    config: FeatureConfig,
    plan: &FoldPlan,
    settings: &EvalSettings,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    let task = Task::new(store, code, config, settings);
    let mut predictions = Vec::new();
    let mut folds = Vec::new();
    let mut audits = Vec::new();

    for (f, fold) in plan.outer.iter().enumerate() {
        if !task.has_both(&fold.train_sessions) {
            return Err(EvalError::SingleClass { scope: alloc::format!("outer fold {f} training sessions") });
        }
        let fold_seed = seed::derive(seed, &[f as u64]);
        let candidates = search_candidates(settings.budget, fold_seed);
        let outcome = search(&task, fold, f, &candidates, fold_seed)?;

        let final_seed = seed::mix(fold_seed, FINAL_STREAM);
        let (train, es) = task.carve(&fold.train_sessions, final_seed)?;
        let prepared = task.prepare(&train, &es, &fold.test_sessions, ModelRole::Final { outer_fold: f })?;
        let (scores, record) = task.fit(&prepared, &outcome.sample, final_seed)?;

        let test_auc = roc_auc(&scores, &prepared.eval.labels).ok();
        for ((key, &score), &label) in prepared.eval.keys.iter().zip(&scores).zip(&prepared.eval.labels) {
            predictions.push(PooledPrediction { key: key.clone(), score, label, fold: f });
        }
        folds.push(FoldSummary {
            fold: f,
            winner: outcome.sample,
            winner_index: outcome.best,
            candidate_mean_aucs: outcome.mean_aucs,
            skipped_inner_folds: outcome.skipped_folds,
            early_stop_sessions: es,
            test_auc,
            stop_epoch: record.stop_epoch,
            best_epoch: record.best_epoch,
        });
        audits.extend(outcome.audits);
        audits.push(prepared.audit);
    }

    predictions.sort_by(|a, b| a.key.cmp(&b.key));
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let labels: Vec<bool> = predictions.iter().map(|p| p.label).collect();
    let auc = match roc_auc(&scores, &labels) {
        Err(MetricsError::SingleClass) => return Err(EvalError::PooledSingleClass),
        other => other?,
    };
    let ci = bootstrap_ci(&scores, &labels, settings.resamples, seed::mix(seed, BOOT_STREAM))?;
    Ok(EvalResult { code, config, predictions, auc, ci, folds, audits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub outcome: Result<EvalResult, EvalError>,
}

/// Grid cells in code-major order. A cell's seed depends only on the run
/// seed and the cell's own code and configuration.
pub fn matrix_cells(codes: &[SsrlCode], configs: &[FeatureConfig], seed: u64) -> Vec<CellSpec> {
    codes
        .iter()
        .flat_map(|&code| {
            configs.iter().map(move |&config| CellSpec {
                code,
                config,
                seed: seed::derive(seed, &[code.index() as u64, config.index() as u64]),
            })
        })
        .collect()
}

pub fn run_cell(store: &FeatureStore<'_>, plan: &FoldPlan, cell: CellSpec, settings: &EvalSettings) -> CellResult {
    CellResult {
        code: cell.code,
        config: cell.config,
        outcome: run_outer(store, cell.code, cell.config, plan, settings, cell.seed),
    }
}

/// Every cell of the grid, sequentially. Failing cells keep their error.
pub fn run_matrix(
    store: &FeatureStore<'_>,
    plan: &FoldPlan,
    codes: &[SsrlCode],
    configs: &[FeatureConfig],
    settings: &EvalSettings,
) -> Vec<CellResult> {
    matrix_cells(codes, configs, settings.seed).into_iter().map(|c| run_cell(store, plan, c, settings)).collect()
}
