//! Two-hidden-layer ReLU network for one binary target, trained with
//! weighted cross-entropy and Adam.

mod adam;
mod net;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use net::{init_params, Activations, Layout, Mode, NetworkParams, PROB_CLAMP};
pub use train::{train, EpochRecord, TrainRecord, IMPROVEMENT, LR_FACTOR, LR_FLOOR, PATIENCE_LR, PATIENCE_STOP};

use alloc::string::String;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN_RANGE: (usize, usize) = (128, 320);
pub const DROPOUT_RANGE: (f64, f64) = (0.1, 0.3);
pub const LR_RANGE: (f64, f64) = (1e-3, 1e-2);
pub const BATCH_SIZES: [usize; 3] = [8, 16, 32];
pub const MAX_EPOCHS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite input at column {0}")]
    NonFiniteInput(usize),
    #[error("input has {got} columns, network expects {expected}")]
    InputWidth { got: usize, expected: usize },
    #[error("validation rows contain a single class")]
    SingleClassValidation,
    #[error("no training rows")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_units: (usize, usize),
    pub dropout_rate: f64,
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl NetworkSpec {
    /// Checks the searchable ranges. Training itself only requires
    /// [`NetworkSpec::check_trainable`], so controls outside the ranges still run.
    pub fn validate(&self) -> Result<(), NnError> {
        self.check_trainable()?;
        let (lo, hi) = HIDDEN_RANGE;
        let (h1, h2) = self.hidden_units;
        if !(lo..=hi).contains(&h1) || !(lo..=hi).contains(&h2) {
            return Err(invalid(alloc::format!("hidden units {h1},{h2} outside [{lo}, {hi}]")));
        }
        if !(DROPOUT_RANGE.0..=DROPOUT_RANGE.1).contains(&self.dropout_rate) {
            return Err(invalid(alloc::format!("dropout {} outside [0.1, 0.3]", self.dropout_rate)));
        }
        if !(LR_RANGE.0..=LR_RANGE.1).contains(&self.learning_rate) {
            return Err(invalid(alloc::format!("learning rate {} outside [0.001, 0.01]", self.learning_rate)));
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(invalid(alloc::format!("batch size {} not in {{8, 16, 32}}", self.batch_size)));
        }
        if self.max_epochs > MAX_EPOCHS {
            return Err(invalid(alloc::format!("max epochs {} above {MAX_EPOCHS}", self.max_epochs)));
        }
        Ok(())
    }

    pub fn check_trainable(&self) -> Result<(), NnError> {
        let (h1, h2) = self.hidden_units;
        if self.input_dim == 0 || h1 == 0 || h2 == 0 {
            return Err(invalid("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid(alloc::format!("dropout {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid(alloc::format!("learning rate {}", self.learning_rate)));
        }
        if !(self.l2_coeff.is_finite() && self.l2_coeff >= 0.0) {
            return Err(invalid(alloc::format!("l2 coefficient {}", self.l2_coeff)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(invalid("batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

fn invalid(msg: String) -> NnError {
    NnError::InvalidSpec(msg)
}

/// Loss weights for positive and negative rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub pos: f64,
    pub neg: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { pos: 1.0, neg: 1.0 };

    pub fn of(&self, label: bool) -> f64 {
        if label {
            self.pos
        } else {
            self.neg
        }
    }
}

/// Row-major feature block with one label per row.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    pub values: &'a [f64],
    pub width: usize,
    pub labels: &'a [bool],
}

impl<'a> Rows<'a> {
    pub fn new(values: &'a [f64], width: usize, labels: &'a [bool]) -> Self {
        assert_eq!(values.len(), width * labels.len(), "values do not match width × rows");
        Rows { values, width, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    fn check_finite(&self) -> Result<(), NnError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(NnError::NonFiniteInput(i % self.width.max(1))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 10,
            hidden_units: (128, 320),
            dropout_rate: 0.2,
            l2_coeff: 1e-4,
            learning_rate: 0.005,
            batch_size: 16,
            max_epochs: 100,
            seed: 0,
        }
    }

    #[test]
    fn validate_ranges() {
        assert!(spec().validate().is_ok());
        assert!(NetworkSpec { hidden_units: (127, 200), ..spec() }.validate().is_err());
        assert!(NetworkSpec { dropout_rate: 0.31, ..spec() }.validate().is_err());
        assert!(NetworkSpec { batch_size: 12, ..spec() }.validate().is_err());
        assert!(NetworkSpec { learning_rate: 0.02, ..spec() }.validate().is_err());
        let control = NetworkSpec { learning_rate: 0.0, ..spec() };
        assert!(control.validate().is_err());
        assert!(control.check_trainable().is_ok());
    }
}
