use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::seed;

const PLAN_STREAM: u64 = 0x9f01;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterFold {
    pub test_sessions: Vec<String>,
    pub train_sessions: Vec<String>,
    /// Validation partitions of `train_sessions` for the inner search.
    pub inner_folds: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub outer: Vec<OuterFold>,
}

impl FoldPlan {
    /// Outer fold holding `session` out, if any.
    pub fn test_fold_of(&self, session: &str) -> Option<usize> {
        self.outer.iter().position(|f| f.test_sessions.iter().any(|s| s == session))
    }
}

/// Shuffles `ids` and deals them round-robin into `k` groups, each sorted.
fn deal(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>, EvalError> {
    if ids.len() < k || k == 0 {
        return Err(EvalError::TooFewGroups { needed: k.max(1), got: ids.len() });
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut seed::rng(seed));
    let mut folds = alloc::vec![Vec::new(); k];
    for (i, id) in order.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(folds)
}

pub fn plan_folds(session_ids: &[String], k_outer: usize, k_inner: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    let ids: Vec<String> = session_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let tests = deal(&ids, k_outer, seed::derive(seed, &[PLAN_STREAM]))?;
    let mut outer = Vec::with_capacity(k_outer);
    for (f, test) in tests.into_iter().enumerate() {
        let train: Vec<String> = ids.iter().filter(|s| !test.contains(s)).cloned().collect();
        let inner = deal(&train, k_inner, seed::derive(seed, &[PLAN_STREAM, f as u64]))?;
        outer.push(OuterFold { test_sessions: test, train_sessions: train, inner_folds: inner });
    }
    Ok(FoldPlan { seed, outer })
}

/// Splits `sessions` into (train, early-stop) with `fraction` of the
/// sessions (at least one) held out, such that `has_both` holds for each
/// side. Tries each cyclic window of a seeded shuffle in turn.
pub fn carve_early_stop(
    sessions: &[String],
    fraction: f64,
    seed: u64,
    has_both: impl Fn(&[String]) -> bool,
) -> Result<(Vec<String>, Vec<String>), EvalError> {
    let n = sessions.len();
    if n < 2 {
        return Err(EvalError::DegenerateSplit { sessions: n });
    }
    let held = ((fraction * n as f64 + 0.5) as usize).clamp(1, n - 1);
    let mut order = sessions.to_vec();
    order.sort();
    order.shuffle(&mut seed::rng(seed));
    for start in 0..n {
        let mut es: Vec<String> = (0..held).map(|k| order[(start + k) % n].clone()).collect();
        let mut train: Vec<String> = order.iter().filter(|s| !es.contains(s)).cloned().collect();
        if has_both(&es) && has_both(&train) {
            es.sort();
            train.sort();
            return Ok((train, es));
        }
    }
    Err(EvalError::DegenerateSplit { sessions: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn six_sessions_give_pairs() {
        let plan = plan_folds(&ids(6), 3, 3, 1).unwrap();
        assert!(plan.outer.iter().all(|f| f.test_sessions.len() == 2));
        let all: BTreeSet<_> = plan.outer.iter().flat_map(|f| f.test_sessions.iter()).collect();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn seven_sessions_balance() {
        let plan = plan_folds(&ids(7), 3, 3, 1).unwrap();
        let mut sizes: Vec<usize> = plan.outer.iter().map(|f| f.test_sessions.len()).collect();
        sizes.sort();
        assert_eq!(sizes, [2, 2, 3]);
    }

    #[test]
    fn too_few_groups() {
        assert_eq!(plan_folds(&ids(2), 3, 3, 0), Err(EvalError::TooFewGroups { needed: 3, got: 2 }));
        // 4 sessions leave 2 or 3 outer-train sessions, too few for 3 inner folds
        assert!(matches!(plan_folds(&ids(4), 3, 3, 0), Err(EvalError::TooFewGroups { .. })));
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut shuffled = ids(10);
        shuffled.reverse();
        assert_eq!(plan_folds(&ids(10), 3, 3, 5).unwrap(), plan_folds(&shuffled, 3, 3, 5).unwrap());
    }

    #[test]
    fn carve_respects_predicate() {
        let sessions = ids(10);
        // only sessions s00 and s01 carry positives
        let both = |set: &[String]| set.iter().any(|s| s == "s00" || s == "s01") && set.iter().any(|s| s > &"s01".into());
        let (train, es) = carve_early_stop(&sessions, 0.2, 3, both).unwrap();
        assert_eq!(es.len(), 2);
        assert_eq!(train.len(), 8);
        assert!(both(&train) && both(&es));
        assert!(carve_early_stop(&sessions[..1], 0.2, 3, |_| true).is_err());
        assert!(carve_early_stop(&sessions, 0.2, 3, |_| false).is_err());
    }

    proptest! {
        #[test]
        fn plan_partitions_sessions(n in 9usize..40, seed in any::<u64>()) {
            let plan = plan_folds(&ids(n), 3, 3, seed).unwrap();
            let mut seen = BTreeSet::new();
            for fold in &plan.outer {
                for s in &fold.test_sessions {
                    prop_assert!(seen.insert(s.clone()));
                    prop_assert!(!fold.train_sessions.contains(s));
                }
                let inner: Vec<&String> = fold.inner_folds.iter().flatten().collect();
                prop_assert_eq!(inner.len(), fold.train_sessions.len());
                prop_assert!(inner.iter().all(|s| fold.train_sessions.contains(s)));
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
