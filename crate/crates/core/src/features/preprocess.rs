use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureError, FeatureMatrix, SegmentKey};

/// Per-column imputation and standardization, fitted on training rows only.
///
/// Missing entries are `NaN`. Columns whose training spread is numerically
/// zero are centered but not scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    fit_keys: Vec<SegmentKey>,
}

pub fn fit_preprocessor(train: &FeatureMatrix) -> Result<Preprocessor, FeatureError> {
    let n = train.n_rows();
    if n == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let w = train.width;
    let mut sums = vec![0.0; w];
    let mut counts = vec![0usize; w];
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); w];
    for row in train.rows() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_nan() {
                sums[j] += x;
                counts[j] += 1;
                ranges[j] = (ranges[j].0.min(x), ranges[j].1.max(x));
            }
        }
    }
    let means: Vec<f64> = (0..w)
        .map(|j| match counts[j] {
            0 => 0.0,
            // exact for constant columns, which summation would perturb
            _ if ranges[j].0 == ranges[j].1 => ranges[j].0,
            c => sums[j] / c as f64,
        })
        .collect();

    // population variance after imputation; imputed entries contribute zero
    let mut sq = vec![0.0; w];
    for row in train.rows() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_nan() {
                let d = x - means[j];
                sq[j] += d * d;
            }
        }
    }
    let scales = sq
        .iter()
        .zip(&means)
        .map(|(&s, &m)| {
            let sd = libm::sqrt(s / n as f64);
            if sd.is_finite() && sd > 1e-12 * m.abs().max(1.0) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(Preprocessor { means, scales, fit_keys: train.row_keys.clone() })
}

impl Preprocessor {
    pub fn width(&self) -> usize {
        self.means.len()
    }

    /// Rows the statistics were computed from.
    pub fn fit_keys(&self) -> &[SegmentKey] {
        &self.fit_keys
    }

    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
        let mut out = matrix.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, matrix: &mut FeatureMatrix) -> Result<(), FeatureError> {
        if matrix.width != self.width() {
            return Err(FeatureError::WidthMismatch { got: matrix.width, expected: self.width() });
        }
        let w = self.width();
        if w == 0 {
            return Ok(());
        }
        for row in matrix.values.chunks_exact_mut(w) {
            for ((x, &m), &s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
                let v = if x.is_nan() { m } else { *x };
                *x = (v - m) / s;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColumnDescriptor;
    use alloc::string::ToString;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        let width = rows[0].len();
        FeatureMatrix {
            values: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            width,
            row_keys: (0..rows.len()).map(|i| SegmentKey::new("s", i)).collect(),
            columns: (0..width).map(|c| ColumnDescriptor::Embedding { offset: 0, component: c }).collect(),
        }
    }

    #[test]
    fn standardizes_with_train_statistics() {
        let p = fit_preprocessor(&matrix(&[&[0.0], &[4.0]])).unwrap();
        let out = p.apply(&matrix(&[&[4.0]])).unwrap();
        assert_eq!(out.values, vec![1.0]);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let train = matrix(&[&[0.1, 3.0], &[0.1, 5.0], &[0.1, 4.0]]);
        let p = fit_preprocessor(&train).unwrap();
        assert_eq!(p.scales[0], 1.0);
        let out = p.apply(&train).unwrap();
        assert!(out.values.iter().step_by(2).all(|&x| x == 0.0));
    }

    #[test]
    fn missing_test_entry_standardizes_to_zero() {
        let p = fit_preprocessor(&matrix(&[&[1.0], &[3.0], &[f64::NAN]])).unwrap();
        assert_eq!(p.means, vec![2.0]);
        let out = p.apply(&matrix(&[&[f64::NAN]])).unwrap();
        assert_eq!(out.values, vec![0.0]);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let empty = FeatureMatrix { values: vec![], width: 1, row_keys: vec![], columns: vec![] };
        assert_eq!(fit_preprocessor(&empty), Err(FeatureError::EmptyTrainingSet));
        let p = fit_preprocessor(&matrix(&[&[1.0]])).unwrap();
        assert!(matches!(p.apply(&matrix(&[&[1.0, 2.0]])), Err(FeatureError::WidthMismatch { .. })));
    }

    #[test]
    fn records_fit_rows() {
        let p = fit_preprocessor(&matrix(&[&[1.0], &[2.0]])).unwrap();
        let keys: Vec<_> = p.fit_keys().iter().map(|k| k.to_string()).collect();
        assert_eq!(keys, vec!["s:0", "s:1"]);
    }
}
