use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::audit::{ModelAudit, ModelRole};
use super::folds::{carve_early_stop, OuterFold};
use super::{class_weights, EvalError, EvalSettings};
use crate::features::{fit_preprocessor, FeatureConfig, FeatureStore, SegmentKey};
use crate::ingestion::SsrlCode;
use crate::metrics::roc_auc;
use crate::nn::{self, NetworkSpec, Rows, TrainRecord, BATCH_SIZES, DROPOUT_RANGE, HIDDEN_RANGE, LR_RANGE};
use crate::seed;

/// Range searched for the L2 coefficient, sampled log-uniformly.
pub const L2_RANGE: (f64, f64) = (1e-5, 1e-3);

const DRAW_STREAM: u64 = 0xd4a3;
const CARVE_STREAM: u64 = 0xca4e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub hidden_units: (usize, usize),
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_coeff: f64,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    libm::exp(rng.random_range(libm::log(lo)..=libm::log(hi))).clamp(lo, hi)
}

impl HyperSample {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        let (lo, hi) = HIDDEN_RANGE;
        HyperSample {
            hidden_units: (rng.random_range(lo..=hi), rng.random_range(lo..=hi)),
            dropout_rate: rng.random_range(DROPOUT_RANGE.0..=DROPOUT_RANGE.1),
            learning_rate: log_uniform(rng, LR_RANGE),
            batch_size: BATCH_SIZES[rng.random_range(0..BATCH_SIZES.len())],
            l2_coeff: log_uniform(rng, L2_RANGE),
        }
    }

    pub fn network_spec(&self, input_dim: usize, max_epochs: usize, seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_units: self.hidden_units,
            dropout_rate: self.dropout_rate,
            l2_coeff: self.l2_coeff,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs,
            seed,
        }
    }
}

/// `budget` samples in draw order.
pub fn search_candidates(budget: usize, seed: u64) -> Vec<HyperSample> {
    let mut rng = seed::rng(seed::mix(seed, DRAW_STREAM));
    (0..budget).map(|_| HyperSample::draw(&mut rng)).collect()
}

pub(super) struct Block {
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
    pub keys: Vec<SegmentKey>,
}

impl Block {
    fn rows(&self, width: usize) -> Rows<'_> {
        Rows::new(&self.values, width, &self.labels)
    }
}

/// Standardized train, early-stop, and evaluation blocks for one split.
pub(super) struct Prepared {
    pub width: usize,
    pub train: Block,
    pub early_stop: Block,
    pub eval: Block,
    pub audit: ModelAudit,
}

/// One code under one configuration over a fixed feature store.
pub(super) struct Task<'s, 'a> {
    pub store: &'s FeatureStore<'a>,
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub settings: &'s EvalSettings,
    rows_by_session: BTreeMap<&'a str, Vec<usize>>,
}

impl<'s, 'a> Task<'s, 'a> {
    pub fn new(store: &'s FeatureStore<'a>, code: SsrlCode, config: FeatureConfig, settings: &'s EvalSettings) -> Self {
        let mut rows_by_session: BTreeMap<&'a str, Vec<usize>> = BTreeMap::new();
        for r in store.labeled_rows() {
            rows_by_session.entry(store.segment(r).session_id.as_str()).or_default().push(r);
        }
        Task { store, code, config, settings, rows_by_session }
    }

    pub fn label(&self, row: usize) -> bool {
        self.store.segment(row).label == Some(self.code)
    }

    pub fn rows(&self, sessions: &[String]) -> Vec<usize> {
        let mut rows: Vec<usize> =
            sessions.iter().filter_map(|s| self.rows_by_session.get(s.as_str())).flatten().copied().collect();
        rows.sort_unstable();
        rows
    }

    pub fn has_both(&self, sessions: &[String]) -> bool {
        let rows = self.rows(sessions);
        let pos = rows.iter().filter(|&&r| self.label(r)).count();
        pos > 0 && pos < rows.len()
    }

    pub fn carve(&self, sessions: &[String], seed: u64) -> Result<(Vec<String>, Vec<String>), EvalError> {
        carve_early_stop(sessions, self.settings.early_stop_fraction, seed::mix(seed, CARVE_STREAM), |s| {
            self.has_both(s)
        })
    }

    /// Fits vocabulary and preprocessing on `train` sessions only and builds
    /// all three blocks.
    pub fn prepare(
        &self,
        train: &[String],
        early_stop: &[String],
        eval: &[String],
        role: ModelRole,
    ) -> Result<Prepared, EvalError> {
        let (train_rows, es_rows, eval_rows) = (self.rows(train), self.rows(early_stop), self.rows(eval));
        let vocab = self.config.uses_log().then(|| self.store.fit_vocabulary(&train_rows));
        let train_m = self.store.matrix(&train_rows, self.config, vocab.as_ref())?;
        let pre = fit_preprocessor(&train_m)?;
        let block = |rows: &[usize], m| -> Result<Block, EvalError> {
            let m = pre.apply(&m)?;
            Ok(Block { labels: rows.iter().map(|&r| self.label(r)).collect(), keys: m.row_keys, values: m.values })
        };
        let width = train_m.width;
        let es_m = self.store.matrix(&es_rows, self.config, vocab.as_ref())?;
        let eval_m = self.store.matrix(&eval_rows, self.config, vocab.as_ref())?;
        let train_b = block(&train_rows, train_m)?;
        let es_b = block(&es_rows, es_m)?;
        let eval_b = block(&eval_rows, eval_m)?;
        let audit = ModelAudit {
            role,
            code: self.code,
            config: self.config,
            train_keys: train_b.keys.clone(),
            early_stop_keys: es_b.keys.clone(),
            eval_keys: eval_b.keys.clone(),
            vocab_fit_keys: vocab.map(|v| v.fit_keys().to_vec()),
            preprocessor_fit_keys: pre.fit_keys().to_vec(),
        };
        Ok(Prepared { width, train: train_b, early_stop: es_b, eval: eval_b, audit })
    }

    /// Trains one network on a prepared split and scores its eval block.
    pub fn fit(&self, prepared: &Prepared, sample: &HyperSample, seed: u64) -> Result<(Vec<f64>, TrainRecord), EvalError> {
        let weights = class_weights(&prepared.train.labels)?;
        let spec = sample.network_spec(prepared.width, self.settings.max_epochs, seed);
        let (params, record) = nn::train(
            &spec,
            &prepared.train.rows(prepared.width),
            &prepared.early_stop.rows(prepared.width),
            weights,
        )?;
        let scores = params.predict(&prepared.eval.rows(prepared.width))?;
        Ok((scores, record))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Index of the winning candidate.
    pub best: usize,
    pub sample: HyperSample,
    /// Mean validation AUC per candidate over the usable inner folds.
    pub mean_aucs: Vec<f64>,
    pub skipped_folds: Vec<usize>,
    #[serde(skip)]
    pub audits: Vec<ModelAudit>,
}

pub(super) fn search(
    task: &Task<'_, '_>,
    fold: &OuterFold,
    outer_index: usize,
    candidates: &[HyperSample],
    seed: u64,
) -> Result<SearchOutcome, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::NoCandidates);
    }
    let mut splits = Vec::new();
    let mut skipped = Vec::new();
    for (j, val) in fold.inner_folds.iter().enumerate() {
        let inner_train: Vec<String> = fold.train_sessions.iter().filter(|s| !val.contains(s)).cloned().collect();
        let usable = task.has_both(val) && task.has_both(&inner_train);
        let carved = if usable { task.carve(&inner_train, seed::derive(seed, &[j as u64])).ok() } else { None };
        match carved {
            Some((train, es)) => {
                let role = ModelRole::Inner { outer_fold: outer_index, inner_fold: j };
                splits.push((j, task.prepare(&train, &es, val, role)?));
            }
            None => skipped.push(j),
        }
    }
    if splits.is_empty() {
        return Err(EvalError::DegenerateInnerFold);
    }

    let mut mean_aucs = Vec::with_capacity(candidates.len());
    for (c, sample) in candidates.iter().enumerate() {
        let mut total = 0.0;
        for (j, prepared) in &splits {
            let (scores, _) = task.fit(prepared, sample, seed::derive(seed, &[c as u64, *j as u64]))?;
            total += roc_auc(&scores, &prepared.eval.labels)?;
        }
        mean_aucs.push(total / splits.len() as f64);
    }
    // strict comparison keeps the earliest draw on ties
    let mut best = 0;
    for (c, &auc) in mean_aucs.iter().enumerate() {
        if auc > mean_aucs[best] {
            best = c;
        }
    }
    Ok(SearchOutcome {
        best,
        sample: candidates[best].clone(),
        mean_aucs,
        skipped_folds: skipped,
        audits: splits.into_iter().map(|(_, p)| p.audit).collect(),
    })
}

/// Randomized search over `candidates` using the inner folds of `fold`.
pub fn inner_search(
    store: &FeatureStore<'_>,
    code: SsrlCode,
    config: FeatureConfig,
    fold: &OuterFold,
    candidates: &[HyperSample],
    settings: &EvalSettings,
    seed: u64,
) -> Result<SearchOutcome, EvalError> {
    let task = Task::new(store, code, config, settings);
    if !task.has_both(&fold.train_sessions) {
        return Err(EvalError::SingleClass { scope: "outer training sessions".into() });
    }
    search(&task, fold, 0, candidates, seed)
}
