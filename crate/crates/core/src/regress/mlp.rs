//! One-hidden-layer perceptron: sigmoid hidden units, linear output,
//! mean-squared-error loss, mini-batch Adam.
//!
//! All parameters live in one flat vector laid out as
//! `[w1 (inputs x hidden, row-major) | b1 (hidden) | w2 (hidden) | b2]`.
//! Coordinate inputs are divided by the volume extents so they sit in
//! `[0, 1]`; targets stay in raw dBm.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::FitError;
use crate::preprocess::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSpec {
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Fraction of the training rows held out to report a per-epoch
    /// validation loss. Zero disables it.
    pub validation_fraction: f64,
    /// Divisors for the x, y, z input columns.
    pub coord_extent: [f64; 3],
}

impl Default for MlpSpec {
    fn default() -> Self {
        let v = crate::model::VolumeSpec::default();
        Self {
            hidden_units: 16,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            validation_fraction: 0.1,
            coord_extent: v.extents(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    /// Per-input multiplier applied before the first layer.
    input_scale: Vec<f64>,
    params: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl Mlp {
    pub fn n_params(inputs: usize, hidden: usize) -> usize {
        inputs * hidden + hidden + hidden + 1
    }

    /// Zero-initialized network with unit input scaling.
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs,
            hidden,
            input_scale: vec![1.0; inputs],
            params: vec![0.0; Self::n_params(inputs, hidden)],
        }
    }

    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero
    /// hidden biases, output bias at `output_bias`.
    pub fn glorot<R: Rng>(inputs: usize, hidden: usize, output_bias: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(inputs, hidden);
        let l1 = libm::sqrt(6.0 / (inputs + hidden) as f64);
        let l2 = libm::sqrt(6.0 / (hidden + 1) as f64);
        let (w1, rest) = net.params.split_at_mut(inputs * hidden);
        for w in w1 {
            *w = rng.random_range(-l1..=l1);
        }
        let w2 = &mut rest[hidden..2 * hidden];
        for w in w2 {
            *w = rng.random_range(-l2..=l2);
        }
        *net.params.last_mut().unwrap() = output_bias;
        net
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_input_scale(&mut self, scale: Vec<f64>) {
        assert_eq!(scale.len(), self.inputs);
        self.input_scale = scale;
    }

    /// Shapes of `(w1, b1, w2, b2)` as `(rows, cols)`.
    pub fn shapes(&self) -> [(usize, usize); 4] {
        [(self.inputs, self.hidden), (self.hidden, 1), (self.hidden, 1), (1, 1)]
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.inputs * self.hidden;
        (b1, b1 + self.hidden, b1 + 2 * self.hidden)
    }

    /// Hidden activations into `act`, returns the output.
    fn forward_into(&self, x: &[f64], act: &mut [f64]) -> f64 {
        let h = self.hidden;
        let (b1, w2, b2) = self.offsets();
        act.copy_from_slice(&self.params[b1..b1 + h]);
        for (i, (&xi, &s)) in x.iter().zip(&self.input_scale).enumerate() {
            let v = xi * s;
            if v == 0.0 {
                continue;
            }
            let row = &self.params[i * h..(i + 1) * h];
            for (a, w) in act.iter_mut().zip(row) {
                *a += v * w;
            }
        }
        let mut out = self.params[b2];
        for (a, w) in act.iter_mut().zip(&self.params[w2..w2 + h]) {
            *a = sigmoid(*a);
            out += *a * w;
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut act = vec![0.0; self.hidden];
        self.forward_into(x, &mut act)
    }

    /// Mean squared error over `rows` and its gradient w.r.t. every parameter.
    pub fn loss_and_grad(&self, data: &FeatureMatrix, rows: &[usize], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let h = self.hidden;
        let (b1, w2, b2) = self.offsets();
        let scale = 2.0 / rows.len() as f64;
        let mut act = vec![0.0; h];
        let mut delta = vec![0.0; h];
        let mut loss = 0.0;
        for &r in rows {
            let x = data.row(r);
            let err = self.forward_into(x, &mut act) - data.targets()[r];
            loss += err * err;
            let g_out = scale * err;
            grad[b2] += g_out;
            for j in 0..h {
                grad[w2 + j] += g_out * act[j];
                delta[j] = g_out * self.params[w2 + j] * act[j] * (1.0 - act[j]);
                grad[b1 + j] += delta[j];
            }
            for (i, (&xi, &s)) in x.iter().zip(&self.input_scale).enumerate() {
                let v = xi * s;
                if v == 0.0 {
                    continue;
                }
                for (g, d) in grad[i * h..(i + 1) * h].iter_mut().zip(&delta) {
                    *g += v * d;
                }
            }
        }
        loss / rows.len() as f64
    }

    pub fn mse(&self, data: &FeatureMatrix, rows: &[usize]) -> f64 {
        let mut act = vec![0.0; self.hidden];
        let sum: f64 = rows
            .iter()
            .map(|&r| {
                let e = self.forward_into(data.row(r), &mut act) - data.targets()[r];
                e * e
            })
            .sum();
        sum / rows.len() as f64
    }
}

/// Per-epoch losses (mean squared error, dBm^2).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (0-based) with the lowest validation loss, if one was tracked.
    pub best_epoch: Option<usize>,
}

pub fn mlp_train(train: &FeatureMatrix, spec: &MlpSpec) -> Result<(Mlp, TrainingHistory), FitError> {
    if spec.hidden_units == 0 || spec.batch_size == 0 {
        return Err(FitError::InvalidSpec("hidden_units and batch_size must be positive"));
    }
    if !(0.0..1.0).contains(&spec.validation_fraction) {
        return Err(FitError::InvalidSpec("validation_fraction must lie in [0, 1)"));
    }
    if spec.coord_extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(FitError::InvalidSpec("coord_extent must be positive"));
    }
    let n = train.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut order: Vec<usize> = (0..n).collect();
    let n_val = if spec.validation_fraction > 0.0 {
        let v = libm::round(spec.validation_fraction * n as f64) as usize;
        v.min(n.saturating_sub(1))
    } else {
        0
    };
    if n_val > 0 {
        order.shuffle(&mut rng);
    }
    let (val_rows, fit_rows) = order.split_at(n_val);
    let (val_rows, mut fit_rows) = (val_rows.to_vec(), fit_rows.to_vec());

    let mean = fit_rows.iter().map(|&r| train.targets()[r]).sum::<f64>() / fit_rows.len() as f64;
    let mut net = Mlp::glorot(train.width(), spec.hidden_units, mean, &mut rng);
    let mut scale = vec![1.0; train.width()];
    for (j, col) in train.layout().coord_range().enumerate() {
        scale[col] = 1.0 / spec.coord_extent[j];
    }
    net.set_input_scale(scale);

    let mut adam = Adam::new(spec.adam, net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    let mut history = TrainingHistory::default();
    let mut best = f64::INFINITY;

    for epoch in 0..spec.epochs {
        fit_rows.shuffle(&mut rng);
        for (batch, rows) in fit_rows.chunks(spec.batch_size).enumerate() {
            let loss = net.loss_and_grad(train, rows, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(FitError::NonFiniteLoss { epoch, batch, loss });
            }
            adam.step(&mut net.params, &grad);
        }
        history.train_loss.push(net.mse(train, &fit_rows));
        if !val_rows.is_empty() {
            let v = net.mse(train, &val_rows);
            if v < best {
                best = v;
                history.best_epoch = Some(epoch);
            }
            history.validation_loss.push(v);
        }
    }
    Ok((net, history))
}
