use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::outer::EvalResult;
use crate::features::{FeatureConfig, SegmentKey};
use crate::ingestion::SsrlCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelRole {
    Inner { outer_fold: usize, inner_fold: usize },
    Final { outer_fold: usize },
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRole::Inner { outer_fold, inner_fold } => write!(f, "outer {outer_fold} inner {inner_fold}"),
            ModelRole::Final { outer_fold } => write!(f, "outer {outer_fold} final"),
        }
    }
}

/// Which rows a trained model saw, and what its fitted transforms saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAudit {
    pub role: ModelRole,
    pub code: SsrlCode,
    pub config: FeatureConfig,
    pub train_keys: Vec<SegmentKey>,
    pub early_stop_keys: Vec<SegmentKey>,
    pub eval_keys: Vec<SegmentKey>,
    pub vocab_fit_keys: Option<Vec<SegmentKey>>,
    pub preprocessor_fit_keys: Vec<SegmentKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TrainTestOverlap { fold: usize, session: String },
    SessionInTwoTestFolds { session: String },
    SharedSession { model: String, session: String, between: (&'static str, &'static str) },
    FitOutsideTraining { model: String, transform: &'static str, key: String },
    PooledCount { key: String, count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TrainTestOverlap { fold, session } => {
                write!(f, "outer fold {fold}: session {session} is in both train and test")
            }
            Violation::SessionInTwoTestFolds { session } => write!(f, "session {session} is tested in two folds"),
            Violation::SharedSession { model, session, between } => {
                write!(f, "{model}: session {session} appears in {} and {}", between.0, between.1)
            }
            Violation::FitOutsideTraining { model, transform, key } => {
                write!(f, "{model}: {transform} was fit on {key}, which is not a training row")
            }
            Violation::PooledCount { key, count } => write!(f, "segment {key} pooled {count} times"),
        }
    }
}

fn sessions(keys: &[SegmentKey]) -> BTreeSet<&str> {
    keys.iter().map(|k| k.session_id.as_str()).collect()
}

/// Checks fold disjointness, per-model row provenance, and pooling
/// completeness against `labeled`. Returns every violation found.
pub fn check_leakage(plan: &FoldPlan, result: &EvalResult, labeled: &[SegmentKey]) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut tested = BTreeSet::new();
    for (f, fold) in plan.outer.iter().enumerate() {
        for s in &fold.test_sessions {
            if fold.train_sessions.contains(s) {
                out.push(Violation::TrainTestOverlap { fold: f, session: s.clone() });
            }
            if !tested.insert(s.as_str()) {
                out.push(Violation::SessionInTwoTestFolds { session: s.clone() });
            }
        }
    }

    for audit in &result.audits {
        let model = alloc::format!("{} {} {}", audit.code, audit.config, audit.role);
        let parts = [
            ("train", sessions(&audit.train_keys)),
            ("early-stop", sessions(&audit.early_stop_keys)),
            ("eval", sessions(&audit.eval_keys)),
        ];
        for a in 0..parts.len() {
            for b in a + 1..parts.len() {
                for s in parts[a].1.intersection(&parts[b].1) {
                    out.push(Violation::SharedSession {
                        model: model.clone(),
                        session: (*s).into(),
                        between: (parts[a].0, parts[b].0),
                    });
                }
            }
        }
        let train: BTreeSet<&SegmentKey> = audit.train_keys.iter().collect();
        let fits = audit.vocab_fit_keys.iter().map(|k| ("vocabulary", k)).chain([("preprocessor", &audit.preprocessor_fit_keys)]);
        for (transform, keys) in fits {
            for k in keys.iter().filter(|k| !train.contains(k)) {
                out.push(Violation::FitOutsideTraining { model: model.clone(), transform, key: alloc::format!("{k}") });
            }
        }
    }

    let mut counts: BTreeMap<&SegmentKey, usize> = labeled.iter().map(|k| (k, 0)).collect();
    for p in &result.predictions {
        *counts.entry(&p.key).or_insert(0) += 1;
    }
    for (k, c) in counts {
        if c != 1 {
            out.push(Violation::PooledCount { key: alloc::format!("{k}"), count: c });
        }
    }
    out
}
