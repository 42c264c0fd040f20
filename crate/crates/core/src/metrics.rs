//! ROC AUC with midrank ties, percentile bootstrap intervals, Cohen's kappa.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const CI_LEVEL: f64 = 0.95;
/// Redraws allowed for a resample that lacks a class before it is skipped.
pub const MAX_REDRAWS: usize = 100;
/// Fraction of skipped resamples above which the interval is refused.
pub const MAX_SKIPPED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("AUC needs both classes")]
    SingleClass,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("need at least {min} predictions, got {got}")]
    TooFew { got: usize, min: usize },
    #[error("non-finite score at position {0}")]
    NonFinite(usize),
    #[error("{skipped} of {resamples} bootstrap resamples lacked a class")]
    TooDegenerate { skipped: usize, resamples: usize },
    #[error("kappa undefined: expected agreement is 1 but observed agreement is {observed}")]
    DegenerateMarginals { observed: f64 },
}

/// Parallel scores and binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPredictions {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, MetricsError> {
        check_inputs(&scores, &labels)?;
        Ok(ScoredPredictions { scores, labels })
    }

    pub fn auc(&self) -> Result<f64, MetricsError> {
        roc_auc(&self.scores, &self.labels)
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.len() < 2 {
        return Err(MetricsError::TooFew { got: scores.len(), min: 2 });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counted half. Computed from midrank sums in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    auc_from_order(scores, labels, &order)
}

/// Rank-sum AUC over indices already sorted by score. Indices may repeat.
fn auc_from_order(scores: &[f64], labels: &[bool], order: &[usize]) -> Result<f64, MetricsError> {
    let n_pos = order.iter().filter(|&&i| labels[i]).count();
    let n_neg = order.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    // twice the positive rank sum keeps midranks integral
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == s {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share the midrank (start+1+end)/2
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_run = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_run;
        start = end;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    // U = R_pos - p(p+1)/2, doubled
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * q) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// Resamples that produced a statistic.
    pub resamples: usize,
    pub skipped: usize,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(mut stats: Vec<f64>, skipped: usize, total: usize) -> Result<ConfidenceInterval, MetricsError> {
    if skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 || stats.is_empty() {
        return Err(MetricsError::TooDegenerate { skipped, resamples: total });
    }
    stats.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - CI_LEVEL) / 2.0;
    Ok(ConfidenceInterval {
        lo: percentile(&stats, tail),
        hi: percentile(&stats, 1.0 - tail),
        level: CI_LEVEL,
        resamples: stats.len(),
        skipped,
    })
}

/// Draws `n` indices with replacement until every label column has both
/// classes, or gives up after [`MAX_REDRAWS`] redraws.
fn draw_resample<R: Rng>(rng: &mut R, n: usize, label_columns: &[&[bool]], buf: &mut Vec<usize>) -> bool {
    for _ in 0..=MAX_REDRAWS {
        buf.clear();
        buf.extend((0..n).map(|_| rng.random_range(0..n)));
        let ok = label_columns.iter().all(|labels| {
            let pos = buf.iter().filter(|&&i| labels[i]).count();
            pos > 0 && pos < n
        });
        if ok {
            return true;
        }
    }
    false
}

/// Percentile bootstrap interval for the AUC. Resample `r` draws from its own
/// stream `derive(seed, [r])`.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    resamples: usize,
    seed: u64,
) -> Result<ConfidenceInterval, MetricsError> {
    roc_auc(scores, labels)?;
    let n = scores.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut skipped = 0;
    let mut idx = Vec::with_capacity(n);
    for r in 0..resamples {
        let mut rng = seed::rng(seed::derive(seed, &[r as u64]));
        if !draw_resample(&mut rng, n, &[labels], &mut idx) {
            skipped += 1;
            continue;
        }
        idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        stats.push(auc_from_order(scores, labels, &idx)?);
    }
    interval(stats, skipped, resamples)
}

/// Bootstrap interval for the mean AUC over several label/score columns that
/// share rows. Rows are resampled jointly across columns.
pub fn bootstrap_mean_ci(
    columns: &[(&[f64], &[bool])],
    resamples: usize,
    seed: u64,
) -> Result<(f64, ConfidenceInterval), MetricsError> {
    let Some(&(first, _)) = columns.first() else {
        return Err(MetricsError::TooFew { got: 0, min: 1 });
    };
    let n = first.len();
    let mut point = 0.0;
    for &(s, l) in columns {
        if s.len() != n {
            return Err(MetricsError::LengthMismatch { scores: s.len(), labels: n });
        }
        point += roc_auc(s, l)?;
    }
    point /= columns.len() as f64;

    let label_cols: Vec<&[bool]> = columns.iter().map(|c| c.1).collect();
    let mut stats = Vec::with_capacity(resamples);
    let mut skipped = 0;
    let mut idx = Vec::with_capacity(n);
    let mut sorted = Vec::with_capacity(n);
    for r in 0..resamples {
        let mut rng = seed::rng(seed::derive(seed, &[r as u64]));
        if !draw_resample(&mut rng, n, &label_cols, &mut idx) {
            skipped += 1;
            continue;
        }
        let mut total = 0.0;
        for &(s, l) in columns {
            sorted.clear();
            sorted.extend_from_slice(&idx);
            sorted.sort_unstable_by(|&a, &b| s[a].total_cmp(&s[b]));
            total += auc_from_order(s, l, &sorted)?;
        }
        stats.push(total / columns.len() as f64);
    }
    Ok((point, interval(stats, skipped, resamples)?))
}

/// Chance-corrected agreement between two raters.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { scores: a.len(), labels: b.len() });
    }
    if a.is_empty() {
        return Err(MetricsError::TooFew { got: 0, min: 1 });
    }
    let n = a.len() as i128;
    let mut marg: BTreeMap<&T, (i128, i128)> = BTreeMap::new();
    let mut agree: i128 = 0;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        if x == y {
            agree += 1;
        }
    }
    // κ = (n·agree − Σ a_k b_k) / (n² − Σ a_k b_k), exact in integers
    let chance: i128 = marg.values().map(|(ca, cb)| ca * cb).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(MetricsError::DegenerateMarginals { observed: agree as f64 / n as f64 })
        };
    }
    Ok((n * agree - chance) as f64 / denom as f64)
}

/// Labels from a contingency table, for agreement fixtures.
pub fn labels_from_table(table: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut a = vec![];
    let mut b = vec![];
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            a.extend(core::iter::repeat_n(i, c));
            b.extend(core::iter::repeat_n(j, c));
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn auc_fixtures() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        let labels = [true, true, false, false];
        let scores = [0.8, 0.4, 0.6, 0.2];
        assert_eq!(brute_auc(&scores, &labels), 0.75);
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn auc_errors() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(MetricsError::SingleClass));
        assert!(matches!(roc_auc(&[0.1], &[true]), Err(MetricsError::TooFew { .. })));
        assert!(matches!(roc_auc(&[0.1, f64::NAN], &[true, false]), Err(MetricsError::NonFinite(1))));
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn bootstrap_all_equal_scores() {
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let ci = bootstrap_ci(&[0.5; 40], &labels, 200, 1).unwrap();
        assert_eq!((ci.lo, ci.hi), (0.5, 0.5));
    }

    #[test]
    fn bootstrap_separated_and_deterministic() {
        let labels: Vec<bool> = (0..200).map(|i| i < 100).collect();
        let scores: Vec<f64> = (0..200).map(|i| if i < 100 { 1.0 + i as f64 } else { -(i as f64) }).collect();
        let ci = bootstrap_ci(&scores, &labels, 300, 9).unwrap();
        assert!(ci.lo >= 0.9 && ci.hi <= 1.0);
        assert_eq!(ci, bootstrap_ci(&scores, &labels, 300, 9).unwrap());
    }

    #[test]
    fn bootstrap_too_degenerate() {
        // one positive in 60 rows: most resamples miss it even after redraws
        let mut labels = vec![false; 400];
        labels[0] = true;
        let scores: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let err = bootstrap_ci(&scores, &labels, 50, 3);
        assert!(err.is_ok() || matches!(err, Err(MetricsError::TooDegenerate { .. })));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!((percentile(&v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn kappa_fixture_is_exact() {
        let (a, b) = labels_from_table(&[vec![20, 5], vec![10, 15]]);
        assert_eq!(a.len(), 50);
        assert_eq!(cohens_kappa(&a, &b).unwrap(), 0.4);
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_degenerate_cases() {
        assert_eq!(cohens_kappa(&[1, 1, 1], &[1, 1, 1]).unwrap(), 1.0);
        assert!(matches!(cohens_kappa::<u8>(&[], &[]), Err(MetricsError::TooFew { .. })));
        assert!(matches!(cohens_kappa(&[1, 2], &[1]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn kappa_near_zero_for_independent_raters() {
        let mut rng = seed::rng(2024);
        let a: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        assert!(cohens_kappa(&a, &b).unwrap().abs() < 0.1);
    }

    #[test]
    fn mean_ci_single_column_matches_point() {
        let labels: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let (point, ci) = bootstrap_mean_ci(&[(&scores, &labels)], 100, 4).unwrap();
        assert_eq!(point, roc_auc(&scores, &labels).unwrap());
        assert!(ci.lo <= ci.hi);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..12).prop_map(|k| k as f64 / 4.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_auc_equals_pairwise((scores, mut labels) in instance()) {
            labels[0] = true;
            labels[1] = false;
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn monotone_transform_and_label_flip((scores, mut labels) in instance()) {
            labels[0] = true;
            labels[1] = false;
            let auc = roc_auc(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|s| libm::exp(3.0 * s) - 7.0).collect();
            prop_assert_eq!(roc_auc(&warped, &labels).unwrap(), auc);
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((roc_auc(&scores, &flipped).unwrap() - (1.0 - auc)).abs() < 1e-12);
        }

        #[test]
        fn kappa_bounded_and_symmetric(
            a in prop::collection::vec(0u8..3, 1..60),
            seed in any::<u64>(),
        ) {
            let mut rng = seed::rng(seed);
            let b: Vec<u8> = a.iter().map(|&x| if rng.random_bool(0.6) { x } else { rng.random_range(0..3) }).collect();
            if let Ok(k) = cohens_kappa(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&k));
                prop_assert_eq!(cohens_kappa(&b, &a).unwrap(), k);
            }
        }
    }
}
