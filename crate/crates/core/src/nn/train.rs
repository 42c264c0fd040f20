use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::Workspace;
use super::{adam_step, init_params, ClassWeights, NetworkParams, NetworkSpec, NnError, Rows};
use crate::metrics::roc_auc;
use crate::seed;

/// Minimum validation AUC gain that resets the patience counters.
pub const IMPROVEMENT: f64 = 1e-4;
pub const PATIENCE_STOP: usize = 10;
pub const PATIENCE_LR: usize = 5;
pub const LR_FACTOR: f64 = 0.5;
pub const LR_FLOOR: f64 = 1e-5;

const TRAIN_STREAM: u64 = 0x7a11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_auc: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    /// Number of epochs run.
    pub stop_epoch: usize,
    /// 1-based epoch whose parameters were returned: the last one reaching
    /// the best validation AUC.
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

/// Minibatch Adam with per-epoch validation AUC. Returns the parameters from
/// the epoch with the highest validation AUC.
pub fn train(
    spec: &NetworkSpec,
    train_rows: &Rows<'_>,
    val_rows: &Rows<'_>,
    weights: ClassWeights,
) -> Result<(NetworkParams, TrainRecord), NnError> {
    spec.check_trainable()?;
    if train_rows.is_empty() {
        return Err(NnError::EmptyTrainingSet);
    }
    for rows in [train_rows, val_rows] {
        if rows.width != spec.input_dim {
            return Err(NnError::InputWidth { got: rows.width, expected: spec.input_dim });
        }
        rows.check_finite()?;
    }
    let pos = val_rows.labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == val_rows.len() {
        return Err(NnError::SingleClassValidation);
    }

    let mut params = init_params(spec);
    let mut rng = seed::rng(seed::mix(spec.seed, TRAIN_STREAM));
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut grad = vec![0.0; params.values.len()];
    let mut ws = Workspace::default();

    let mut lr = spec.learning_rate;
    let mut best = params.clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut reference = f64::NEG_INFINITY;
    let mut since_improvement = 0;
    let mut since_lr_change = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = params.accumulate_batch(
                train_rows,
                batch,
                weights,
                spec.l2_coeff,
                Some((spec.dropout_rate, &mut rng)),
                &mut ws,
                &mut grad,
            );
            loss_sum += loss * batch.len() as f64;
            let NetworkParams { values, adam, .. } = &mut params;
            adam_step(values, adam, &grad, lr);
        }

        let scores = params.predict(val_rows)?;
        let auc = roc_auc(&scores, val_rows.labels).map_err(|_| NnError::SingleClassValidation)?;
        epochs.push(EpochRecord { train_loss: loss_sum / train_rows.len() as f64, val_auc: auc, learning_rate: lr });

        // on ties keep the later, longer-trained epoch
        if auc >= best_auc {
            best_auc = auc;
            best_epoch = epoch;
            best.clone_from(&params);
        }
        if auc > reference + IMPROVEMENT {
            reference = auc;
            since_improvement = 0;
            since_lr_change = 0;
        } else {
            since_improvement += 1;
            since_lr_change += 1;
            if since_lr_change >= PATIENCE_LR {
                if lr > LR_FLOOR {
                    lr = (lr * LR_FACTOR).max(LR_FLOOR);
                }
                since_lr_change = 0;
            }
            if since_improvement >= PATIENCE_STOP {
                break;
            }
        }
    }

    let record = TrainRecord { stop_epoch: epochs.len(), epochs, best_epoch, best_val_auc: best_auc };
    Ok((best, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(lr: f64, seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim: 2,
            hidden_units: (16, 16),
            dropout_rate: 0.1,
            l2_coeff: 1e-4,
            learning_rate: lr,
            batch_size: 8,
            max_epochs: 100,
            seed,
        }
    }

    fn separable(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = seed::rng(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2 == 0;
            let shift = if label { 1.0 } else { -1.0 };
            x.push(shift + rng.random_range(-0.8..0.8));
            x.push(-shift + rng.random_range(-0.8..0.8));
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_reaches_full_auc() {
        let (x, y) = separable(40, 1);
        let (vx, vy) = separable(20, 2);
        let (params, rec) =
            train(&spec(0.01, 3), &Rows::new(&x, 2, &y), &Rows::new(&vx, 2, &vy), ClassWeights::UNIT).unwrap();
        assert_eq!(rec.best_val_auc, 1.0);
        let scores = params.predict(&Rows::new(&vx, 2, &vy)).unwrap();
        assert_eq!(roc_auc(&scores, &vy).unwrap(), rec.best_val_auc);
    }

    #[test]
    fn flat_auc_stops_early_and_is_deterministic() {
        let (x, y) = separable(40, 4);
        let (vx, vy) = separable(20, 5);
        let run = || train(&spec(0.0, 6), &Rows::new(&x, 2, &y), &Rows::new(&vx, 2, &vy), ClassWeights::UNIT).unwrap();
        let (p, rec) = run();
        assert_eq!(rec.stop_epoch, 1 + PATIENCE_STOP);
        assert!(rec.epochs.iter().all(|e| e.learning_rate == 0.0));
        assert_eq!((p, rec), run());
    }

    #[test]
    fn record_invariants() {
        let (x, y) = separable(40, 7);
        let (vx, vy) = separable(20, 8);
        let (_, rec) =
            train(&spec(0.003, 9), &Rows::new(&x, 2, &y), &Rows::new(&vx, 2, &vy), ClassWeights::UNIT).unwrap();
        assert!(rec.stop_epoch <= 100 && rec.stop_epoch == rec.epochs.len());
        let max = rec.epochs.iter().map(|e| e.val_auc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, rec.best_val_auc);
        assert!(rec.epochs.iter().all(|e| e.learning_rate >= LR_FLOOR));
    }

    #[test]
    fn single_class_validation_is_rejected() {
        let (x, y) = separable(10, 1);
        let err = train(&spec(0.01, 0), &Rows::new(&x, 2, &y), &Rows::new(&[0.0, 0.0], 2, &[true]), ClassWeights::UNIT);
        assert_eq!(err.unwrap_err(), NnError::SingleClassValidation);
    }
}
