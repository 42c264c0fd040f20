use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, ClassWeights, NetworkSpec, NnError, Rows};
use crate::seed;

/// Probabilities are kept this far from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-12;

const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Inverted dropout with masks drawn from `seed`.
    Train { rate: f64, seed: u64 },
}

/// Weights and biases in one flat buffer, plus optimizer state.
///
/// Weight matrices are stored input-major: entry (out, in) of the layer with
/// `fan_out` units lives at `in * fan_out + out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub input_dim: usize,
    pub hidden: (usize, usize),
    pub values: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub w3: Range<usize>,
    pub b3: Range<usize>,
}

impl Layout {
    fn new(input: usize, h1: usize, h2: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Layout {
            w1: take(input * h1),
            b1: take(h1),
            w2: take(h1 * h2),
            b2: take(h2),
            w3: take(h2),
            b3: take(1),
        }
    }

    pub fn len(&self) -> usize {
        self.b3.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight_ranges(&self) -> [Range<usize>; 3] {
        [self.w1.clone(), self.w2.clone(), self.w3.clone()]
    }
}

/// Per-row intermediate values kept for backpropagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Activations {
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub mask1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub mask2: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn fill_mask(mask: &mut Vec<f64>, n: usize, dropout: Option<(f64, &mut ChaCha8Rng)>) {
    mask.clear();
    match dropout {
        Some((rate, rng)) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            mask.extend((0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }));
        }
        _ => mask.resize(n, 1.0),
    }
}

fn bce(p: f64, y: bool) -> f64 {
    if y {
        -libm::log(p)
    } else {
        -libm::log(1.0 - p)
    }
}

/// Xavier-uniform weights, zero biases, zero moments.
pub fn init_params(spec: &NetworkSpec) -> NetworkParams {
    let (h1, h2) = spec.hidden_units;
    let layout = Layout::new(spec.input_dim, h1, h2);
    let mut values = vec![0.0; layout.len()];
    let mut rng = seed::rng(seed::mix(spec.seed, INIT_STREAM));
    for (range, fan_in, fan_out) in [
        (layout.w1.clone(), spec.input_dim, h1),
        (layout.w2.clone(), h1, h2),
        (layout.w3.clone(), h2, 1),
    ] {
        let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        for w in &mut values[range] {
            *w = rng.random_range(-bound..bound);
        }
    }
    NetworkParams { input_dim: spec.input_dim, hidden: (h1, h2), adam: AdamState::new(values.len()), values }
}

impl NetworkParams {
    pub fn layout(&self) -> Layout {
        Layout::new(self.input_dim, self.hidden.0, self.hidden.1)
    }

    /// (rows, cols) of each weight matrix in output × input orientation.
    pub fn weight_shapes(&self) -> [(usize, usize); 3] {
        let (h1, h2) = self.hidden;
        [(h1, self.input_dim), (h2, h1), (1, h2)]
    }

    /// Entry (out, in) of layer `layer` (0-based).
    pub fn weight(&self, layer: usize, out: usize, input: usize) -> f64 {
        let layout = self.layout();
        let fan_out = self.weight_shapes()[layer].0;
        self.values[layout.weight_ranges()[layer].start + input * fan_out + out]
    }

    pub fn biases(&self) -> [&[f64]; 3] {
        let l = self.layout();
        [&self.values[l.b1], &self.values[l.b2], &self.values[l.b3]]
    }

    /// Σ‖W‖² over the three weight matrices, biases excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layout().weight_ranges().into_iter().map(|r| self.values[r].iter().map(|w| w * w).sum::<f64>()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<(f64, Activations), NnError> {
        if x.len() != self.input_dim {
            return Err(NnError::InputWidth { got: x.len(), expected: self.input_dim });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput(i));
        }
        let mut act = Activations::default();
        let p = match mode {
            Mode::Eval => self.forward_into(x, None, &mut act),
            Mode::Train { rate, seed } => {
                let mut rng = seed::rng(seed);
                self.forward_into(x, Some((rate, &mut rng)), &mut act)
            }
        };
        Ok((p, act))
    }

    pub(crate) fn forward_into(&self, x: &[f64], mut dropout: Option<(f64, &mut ChaCha8Rng)>, act: &mut Activations) -> f64 {
        let (h1, h2) = self.hidden;
        let l = self.layout();
        let v = &self.values;

        act.z1.clear();
        act.z1.extend_from_slice(&v[l.b1.clone()]);
        let w1 = &v[l.w1.clone()];
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                axpy(&mut act.z1, xk, &w1[k * h1..(k + 1) * h1]);
            }
        }
        fill_mask(&mut act.mask1, h1, dropout.as_mut().map(|(r, g)| (*r, &mut **g)));
        act.a1.clear();
        act.a1.extend(act.z1.iter().zip(&act.mask1).map(|(&z, &m)| z.max(0.0) * m));

        act.z2.clear();
        act.z2.extend_from_slice(&v[l.b2.clone()]);
        let w2 = &v[l.w2.clone()];
        for (j, &a) in act.a1.iter().enumerate() {
            if a != 0.0 {
                axpy(&mut act.z2, a, &w2[j * h2..(j + 1) * h2]);
            }
        }
        fill_mask(&mut act.mask2, h2, dropout.as_mut().map(|(r, g)| (*r, &mut **g)));
        act.a2.clear();
        act.a2.extend(act.z2.iter().zip(&act.mask2).map(|(&z, &m)| z.max(0.0) * m));

        act.logit = v[l.b3.start] + dot(&act.a2, &v[l.w3.clone()]);
        act.prob = sigmoid(act.logit).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        act.prob
    }

    /// Accumulates d(loss)/d(params) for one row into `grad`, given the
    /// derivative of the loss with respect to the output logit.
    pub(crate) fn backward_into(&self, x: &[f64], act: &Activations, dlogit: f64, grad: &mut [f64], dz2: &mut Vec<f64>) {
        let (h1, h2) = self.hidden;
        let l = self.layout();
        let v = &self.values;

        grad[l.b3.start] += dlogit;
        axpy(&mut grad[l.w3.clone()], dlogit, &act.a2);

        let w3 = &v[l.w3.clone()];
        dz2.clear();
        dz2.extend((0..h2).map(|j| if act.z2[j] > 0.0 { dlogit * w3[j] * act.mask2[j] } else { 0.0 }));
        axpy(&mut grad[l.b2.clone()], 1.0, dz2);
        let gw2 = l.w2.start;
        let w2 = &v[l.w2.clone()];
        for j in 0..h1 {
            let a = act.a1[j];
            if a == 0.0 {
                continue;
            }
            axpy(&mut grad[gw2 + j * h2..gw2 + (j + 1) * h2], a, dz2);
            // a1[j] != 0 implies the unit is active and kept
            let dz1 = dot(&w2[j * h2..(j + 1) * h2], dz2) * act.mask1[j];
            grad[l.b1.start + j] += dz1;
            let gw1 = l.w1.start;
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    grad[gw1 + k * h1 + j] += xk * dz1;
                }
            }
        }
    }

    /// Mean weighted cross-entropy over `batch` plus `l2 · Σ‖W‖²`, and its
    /// gradient. In train mode one mask stream seeded by `seed` covers the
    /// batch in row order.
    pub fn loss_and_grad(&self, batch: &Rows<'_>, weights: ClassWeights, l2: f64, mode: Mode) -> (f64, Vec<f64>) {
        assert!(!batch.is_empty(), "empty batch");
        let mut grad = vec![0.0; self.values.len()];
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut rng = match mode {
            Mode::Train { seed, .. } => Some(seed::rng(seed)),
            Mode::Eval => None,
        };
        let rate = match mode {
            Mode::Train { rate, .. } => rate,
            Mode::Eval => 0.0,
        };
        let mut ws = Workspace::default();
        let loss = self.accumulate_batch(batch, &idx, weights, l2, rng.as_mut().map(|r| (rate, r)), &mut ws, &mut grad);
        (loss, grad)
    }

    pub(crate) fn accumulate_batch(
        &self,
        rows: &Rows<'_>,
        idx: &[usize],
        weights: ClassWeights,
        l2: f64,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) -> f64 {
        let inv_b = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        for &i in idx {
            let x = rows.row(i);
            let y = rows.labels[i];
            let w = weights.of(y);
            let p = self.forward_into(x, dropout.as_mut().map(|(r, g)| (*r, &mut **g)), &mut ws.act);
            loss += w * bce(p, y) * inv_b;
            let target = if y { 1.0 } else { 0.0 };
            self.backward_into(x, &ws.act, (p - target) * w * inv_b, grad, &mut ws.dz2);
        }
        if l2 > 0.0 {
            for r in self.layout().weight_ranges() {
                for (g, &w) in grad[r.clone()].iter_mut().zip(&self.values[r]) {
                    *g += 2.0 * l2 * w;
                    loss += l2 * w * w;
                }
            }
        }
        loss
    }

    /// Eval-mode probabilities for every row.
    pub fn predict(&self, rows: &Rows<'_>) -> Result<Vec<f64>, NnError> {
        if rows.width != self.input_dim {
            return Err(NnError::InputWidth { got: rows.width, expected: self.input_dim });
        }
        rows.check_finite()?;
        let mut act = Activations::default();
        Ok((0..rows.len()).map(|i| self.forward_into(rows.row(i), None, &mut act)).collect())
    }
}

#[derive(Default)]
pub(crate) struct Workspace {
    act: Activations,
    dz2: Vec<f64>,
}
