//! Fully connected criticality regressor.
//!
//! The network predicts `z = ln(criticality + ε)` directly; training minimises
//! the mean squared error in that log space. Hidden layers use ReLU, the output
//! is linear. Everything is `f64` and single threaded so runs are reproducible
//! bit for bit.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::Dataset;
use crate::env::LocalPatch;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty batch or dataset")]
    Empty,
}

/// One regression example: input features and raw (non-log) criticality.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: f64,
}

impl Sample {
    pub fn new(input: Vec<f64>, label: f64) -> Self {
        Self { input, label }
    }
}

impl Dataset {
    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples
            .iter()
            .map(|s| Sample::new(s.patch.to_features(), s.criticality))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    /// Per layer, row-major `out × in`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    epsilon: f64,
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<(), LearnError> {
    if layer_sizes.len() < 2 {
        return Err(LearnError::ShapeMismatch(
            "need at least an input and an output layer".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(LearnError::ShapeMismatch("zero-width layer".into()));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(LearnError::ShapeMismatch("output layer must have width 1".into()));
    }
    Ok(())
}

impl MlpModel {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, LearnError> {
        check_layer_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&o| vec![0.0; o]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            epsilon: DEFAULT_EPSILON,
        })
    }

    /// He-normal weights (`σ = sqrt(2 / fan_in)`), zero biases.
    pub fn new_he(layer_sizes: &[usize], seed: u64) -> Result<Self, LearnError> {
        let mut model = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, w) in model.weights.iter_mut().enumerate() {
            let fan_in = layer_sizes[l] as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
            for v in w.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        epsilon: f64,
    ) -> Result<Self, LearnError> {
        check_layer_sizes(&layer_sizes)?;
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(LearnError::ShapeMismatch(format!(
                "expected {layers} weight and bias blocks"
            )));
        }
        for l in 0..layers {
            let (i, o) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].len() != i * o || biases[l].len() != o {
                return Err(LearnError::ShapeMismatch(format!(
                    "layer {l}: expected {o}x{i} weights and {o} biases"
                )));
            }
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(LearnError::ShapeMismatch(format!("epsilon {epsilon} must be positive")));
        }
        let model = Self {
            layer_sizes,
            weights,
            biases,
            epsilon,
        };
        if !model.is_finite() {
            return Err(LearnError::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite())
    }

    /// Mutable access to weights and biases, mainly for tests and tooling.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[l], &mut self.biases[l])
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat parameter layout: layer by layer, weights (row-major) then biases.
    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for l in 0..self.layer_count() {
            if idx < self.weights[l].len() {
                return (l, false, idx);
            }
            idx -= self.weights[l].len();
            if idx < self.biases[l].len() {
                return (l, true, idx);
            }
            idx -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, idx: usize) -> f64 {
        match self.locate(idx) {
            (l, false, k) => self.weights[l][k],
            (l, true, k) => self.biases[l][k],
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        match self.locate(idx) {
            (l, false, k) => self.weights[l][k] = v,
            (l, true, k) => self.biases[l][k] = v,
        }
    }

    /// Log-space target for a raw criticality label.
    pub fn target(&self, label: f64) -> f64 {
        (label + self.epsilon).ln()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), LearnError> {
        if input.len() != self.input_size() {
            return Err(LearnError::ShapeMismatch(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Inference pass (no dropout): predicted log-criticality.
    pub fn forward(&self, input: &[f64]) -> Result<f64, LearnError> {
        self.check_input(input)?;
        let mut buf = Vec::new();
        Ok(self.forward_into(input, &mut buf))
    }

    fn forward_into(&self, input: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let mut cur: Vec<f64> = input.to_vec();
        let last = self.layer_count() - 1;
        for l in 0..self.layer_count() {
            affine(&self.weights[l], &self.biases[l], &cur, scratch);
            if l < last {
                for v in scratch.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, scratch);
        }
        cur[0]
    }

    pub fn forward_patch(&self, patch: &LocalPatch) -> Result<f64, LearnError> {
        self.forward(&patch.to_features())
    }

    /// `max(0, exp(z) − ε)`, the inverse of the label transform.
    pub fn predict_criticality(&self, patch: &LocalPatch) -> Result<f64, LearnError> {
        Ok(self.criticality_from_output(self.forward_patch(patch)?))
    }

    pub fn criticality_from_output(&self, z: f64) -> f64 {
        if z <= self.epsilon.ln() {
            return 0.0;
        }
        (z.exp() - self.epsilon).max(0.0)
    }

    /// Mean squared error in log space over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, LearnError> {
        if batch.is_empty() {
            return Err(LearnError::Empty);
        }
        let mut scratch = Vec::new();
        let mut total = 0.0;
        for s in batch {
            self.check_input(&s.input)?;
            let r = self.forward_into(&s.input, &mut scratch) - self.target(s.label);
            total += r * r;
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and flat parameter gradient over `batch`, with optional inverted
    /// dropout on hidden activations.
    fn loss_and_gradient<R: Rng>(
        &self,
        batch: &[Sample],
        dropout: Option<(f64, &mut R)>,
    ) -> (f64, Vec<f64>) {
        let layers = self.layer_count();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut dropout = dropout;

        // activations[l] is the input to layer l
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); layers + 1];
        let mut masks: Vec<Vec<f64>> = vec![Vec::new(); layers];
        let mut scratch = Vec::new();
        for s in batch {
            activations[0].clear();
            activations[0].extend_from_slice(&s.input);
            for l in 0..layers {
                affine(&self.weights[l], &self.biases[l], &activations[l], &mut scratch);
                if l + 1 < layers {
                    masks[l].clear();
                    for v in scratch.iter_mut() {
                        *v = v.max(0.0);
                    }
                    if let Some((p, rng)) = dropout.as_mut() {
                        let keep = 1.0 / (1.0 - *p);
                        for v in scratch.iter_mut() {
                            let m = if rng.random::<f64>() < *p { 0.0 } else { keep };
                            masks[l].push(m);
                            *v *= m;
                        }
                    }
                }
                activations[l + 1].clear();
                activations[l + 1].extend_from_slice(&scratch);
            }
            let out = activations[layers][0];
            let r = out - self.target(s.label);
            loss += r * r * scale;

            // backward: delta = dL/d(pre-activation) of the current layer
            let mut delta = vec![2.0 * r * scale];
            for l in (0..layers).rev() {
                let input = &activations[l];
                let n_in = self.layer_sizes[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[l][o] += d;
                    let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // through dropout mask and ReLU of layer l-1's output
                let mask = &masks[l - 1];
                for (k, p) in prev.iter_mut().enumerate() {
                    if input[k] <= 0.0 {
                        *p = 0.0;
                    } else if !mask.is_empty() {
                        *p *= mask[k];
                    }
                }
                delta = prev;
            }
        }
        let mut flat = Vec::with_capacity(self.parameter_count());
        for l in 0..layers {
            flat.extend_from_slice(&gw[l]);
            flat.extend_from_slice(&gb[l]);
        }
        (loss, flat)
    }

    /// Analytic gradient of [`MlpModel::loss`] in the flat parameter layout.
    pub fn gradient(&self, batch: &[Sample]) -> Result<Vec<f64>, LearnError> {
        if batch.is_empty() {
            return Err(LearnError::Empty);
        }
        for s in batch {
            self.check_input(&s.input)?;
        }
        Ok(self.loss_and_gradient::<ChaCha8Rng>(batch, None).1)
    }

    fn apply_update(&mut self, velocity: &[f64]) {
        let mut k = 0;
        for l in 0..self.layer_count() {
            for w in self.weights[l].iter_mut() {
                *w += velocity[k];
                k += 1;
            }
            for b in self.biases[l].iter_mut() {
                *b += velocity[k];
                k += 1;
            }
        }
    }
}

/// Inference for binary inputs given as the indices of their ones.
///
/// Keeps the first layer transposed so each active input adds one contiguous
/// row, and reuses its buffers across calls. Outputs equal [`MlpModel::forward`]
/// up to floating-point summation order.
#[derive(Debug, Clone)]
/// Fast inference for 0/1 inputs given as the indices of their ones.
pub struct BinaryPredictor<'a> {
    model: &'a MlpModel,
    /// First layer, `in × out`.
    first_t: Vec<f64>,
    zero_output: f64,
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> BinaryPredictor<'a> {
    pub fn new(model: &'a MlpModel) -> Self {
        let (n_in, n_out) = (model.layer_sizes[0], model.layer_sizes[1]);
        let w = &model.weights[0];
        let mut first_t = vec![0.0; w.len()];
        for o in 0..n_out {
            for i in 0..n_in {
                first_t[i * n_out + o] = w[o * n_in + i];
            }
        }
        let mut p = Self {
            model,
            first_t,
            zero_output: 0.0,
            cur: Vec::new(),
            next: Vec::new(),
        };
        p.zero_output = p.forward_active(&[]);
        p
    }

    /// Log-space output for an input whose ones sit at `active`.
    pub fn forward_active(&mut self, active: &[usize]) -> f64 {
        let m = self.model;
        let layers = m.layer_count();
        let n_out = m.layer_sizes[1];
        self.cur.clear();
        self.cur.extend_from_slice(&m.biases[0]);
        for &i in active {
            let row = &self.first_t[i * n_out..(i + 1) * n_out];
            for (c, &w) in self.cur.iter_mut().zip(row) {
                *c += w;
            }
        }
        for l in 1..layers {
            for v in self.cur.iter_mut() {
                *v = v.max(0.0);
            }
            let n_in = m.layer_sizes[l];
            self.next.clear();
            self.next.extend(m.biases[l].iter().enumerate().map(|(o, &b)| {
                let row = &m.weights[l][o * n_in..(o + 1) * n_in];
                b + row.iter().zip(&self.cur).map(|(w, x)| w * x).sum::<f64>()
            }));
            std::mem::swap(&mut self.cur, &mut self.next);
        }
        self.cur[0]
    }

    /// Criticality for a binary input; free patches reuse a cached value.
    pub fn predict_active(&mut self, active: &[usize]) -> f64 {
        let z = if active.is_empty() {
            self.zero_output
        } else {
            self.forward_active(active)
        };
        self.model.criticality_from_output(z)
    }
}

/// `out = W x + b` with `W` row-major; zero inputs are skipped, which makes
/// sparse binary patches cheap.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(b);
    let n_in = x.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().enumerate() {
            *v += w[o * n_in + i] * xi;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    pub seed: u64,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_dropout() -> f64 {
    0.1
}

fn default_validation_fraction() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: default_momentum(),
            dropout_rate: default_dropout(),
            validation_fraction: default_validation_fraction(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.batch_size == 0 {
            return Err(LearnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LearnError::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(LearnError::InvalidConfig(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(LearnError::InvalidConfig(
                "learning rate must be positive and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the dropout-perturbed minibatch losses seen during the epoch.
    pub train_loss: f64,
    /// Inference loss on the held-out split, if there is one.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    /// Loss of the best constant predictor (mean training target) on the
    /// validation split.
    pub constant_baseline_loss: Option<f64>,
    /// Training loss of the initial model before any update.
    pub initial_train_loss: f64,
}

/// Seeded disjoint train/validation split over `len` rows.
pub fn split_indices(len: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((len as f64) * validation_fraction).round() as usize;
    let n_val = n_val.min(len.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Mini-batch SGD with momentum and inverted dropout.
///
/// The output bias starts at the mean training target so early epochs are not
/// spent learning the offset.
pub fn train(
    samples: &[Sample],
    cfg: &TrainConfig,
    layer_sizes: &[usize],
) -> Result<(MlpModel, TrainReport), LearnError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LearnError::Empty);
    }
    let mut model = MlpModel::new_he(layer_sizes, cfg.seed)?;
    for s in samples {
        model.check_input(&s.input)?;
    }
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.validation_fraction, cfg.seed);
    let train_set: Vec<Sample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();

    let mean_target =
        train_set.iter().map(|s| model.target(s.label)).sum::<f64>() / train_set.len() as f64;
    let last = model.layer_count() - 1;
    model.biases[last][0] = mean_target;
    let constant_baseline_loss = (!val_set.is_empty()).then(|| {
        val_set
            .iter()
            .map(|s| (model.target(s.label) - mean_target).powi(2))
            .sum::<f64>()
            / val_set.len() as f64
    });
    let initial_train_loss = model.loss(&train_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a1e);
    let mut velocity = vec![0.0; model.parameter_count()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let dropout = (cfg.dropout_rate > 0.0).then_some((cfg.dropout_rate, &mut rng));
            let (loss, grad) = model.loss_and_gradient(&batch, dropout);
            if !loss.is_finite() {
                return Err(LearnError::Diverged { epoch, loss });
            }
            for (v, g) in velocity.iter_mut().zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
            }
            model.apply_update(&velocity);
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let validation_loss = if val_set.is_empty() {
            None
        } else {
            Some(model.loss(&val_set)?)
        };
        if !model.is_finite() || validation_loss.is_some_and(|l| !l.is_finite()) {
            return Err(LearnError::Diverged {
                epoch,
                loss: validation_loss.unwrap_or(f64::NAN),
            });
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    Ok((
        model,
        TrainReport {
            epochs,
            train_indices: train_idx,
            validation_indices: val_idx,
            constant_baseline_loss,
            initial_train_loss,
        },
    ))
}

/// Worst relative error between analytic gradients and central finite
/// differences (step `1e-5`) over `num_params` randomly chosen parameters.
///
/// Relative error is `|a − f| / max(|a|, |f|)`, taken as zero when both vanish.
pub fn gradient_check(
    model: &MlpModel,
    batch: &[Sample],
    num_params: usize,
    seed: u64,
) -> Result<f64, LearnError> {
    const STEP: f64 = 1e-5;
    let analytic = model.gradient(batch)?;
    let total = model.parameter_count();
    let picks: Vec<usize> = if num_params >= total {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, num_params).into_vec()
    };
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for idx in picks {
        let orig = probe.param(idx);
        probe.set_param(idx, orig + STEP);
        let up = probe.loss(batch)?;
        probe.set_param(idx, orig - STEP);
        let down = probe.loss(batch)?;
        probe.set_param(idx, orig);
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[idx];
        let denom = a.abs().max(numeric.abs());
        if denom > 0.0 {
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_forward(model: &MlpModel, input: &[f64]) -> f64 {
        // plain dense loops in a different order from `affine`
        let mut act = input.to_vec();
        let sizes = model.layer_sizes();
        for l in 0..model.layer_count() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = 0.0;
                for i in 0..n_in {
                    s += model.weights()[l][o * n_in + i] * act[i];
                }
                s += model.biases()[l][o];
                next[o] = if l + 1 < model.layer_count() { s.max(0.0) } else { s };
            }
            act = next;
        }
        act[0]
    }

    fn random_batch(rng: &mut ChaCha8Rng, width: usize, rows: usize) -> Vec<Sample> {
        (0..rows)
            .map(|_| {
                let input = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
                Sample::new(input, rng.random_range(0.0..3.0))
            })
            .collect()
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[4, 3, 1]).unwrap();
        assert_eq!(m.forward(&[1.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_affine_layer_selects_cell() {
        let mut m = MlpModel::zeros(&[5, 1]).unwrap();
        let (w, b) = m.layer_mut(0);
        w[3] = 1.0;
        b[0] = 0.25;
        assert_eq!(m.forward(&[0.0, 1.0, 1.0, 1.0, 0.0]).unwrap(), 1.25);
        assert_eq!(m.forward(&[1.0, 1.0, 1.0, 0.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn forward_matches_reference() {
        let m = MlpModel::new_he(&[12, 9, 7, 1], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = m.forward(&x).unwrap();
            let b = reference_forward(&m, &x);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn binary_predictor_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..10 {
            let model = MlpModel::new_he(&[100, 16, 8, 1], seed).unwrap();
            let mut fast = BinaryPredictor::new(&model);
            for density in [0.0, 0.1, 0.5, 1.0] {
                let x: Vec<f64> = (0..100).map(|_| if rng.random_bool(density) { 1.0 } else { 0.0 }).collect();
                let active: Vec<usize> = (0..100).filter(|&i| x[i] == 1.0).collect();
                let want = model.forward(&x).unwrap();
                let got = fast.forward_active(&active);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
                let p = fast.predict_active(&active);
                assert!((p - model.criticality_from_output(want)).abs() <= 1e-9 * p.max(1.0));
            }
        }
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::zeros(&[4, 1]).unwrap();
        assert!(matches!(m.forward(&[0.0; 3]), Err(LearnError::ShapeMismatch(_))));
        assert!(MlpModel::zeros(&[4, 2]).is_err());
        assert!(MlpModel::zeros(&[4]).is_err());
    }

    #[test]
    fn loss_values() {
        let m = MlpModel::zeros(&[2, 1]).unwrap();
        let l = m.loss(&[Sample::new(vec![0.0, 0.0], 0.0)]).unwrap();
        let expected = (1e-6f64).ln().powi(2);
        assert!((l - expected).abs() < 1e-9);
        assert!((l - 190.868).abs() < 1e-3);

        let mut m = MlpModel::zeros(&[2, 1]).unwrap();
        let target = m.target(2.0);
        m.layer_mut(0).1[0] = target;
        assert_eq!(m.loss(&[Sample::new(vec![1.0, 0.0], 2.0)]).unwrap(), 0.0);
    }

    #[test]
    fn loss_ignores_row_order() {
        let m = MlpModel::new_he(&[3, 4, 1], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut batch = random_batch(&mut rng, 3, 9);
        let a = m.loss(&batch).unwrap();
        batch.reverse();
        let b = m.loss(&batch).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn prediction_inverts_label_transform() {
        let m = MlpModel::zeros(&[2, 1]).unwrap();
        assert_eq!(m.criticality_from_output((1e-6f64).ln()), 0.0);
        assert!((m.criticality_from_output((1.0 + 1e-6f64).ln()) - 1.0).abs() < 1e-9);
        assert_eq!(m.criticality_from_output(-100.0), 0.0);
        let mut prev = 0.0;
        for k in 0..50 {
            let p = m.criticality_from_output(-15.0 + 0.4 * k as f64);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for seed in 0..5 {
            let m = MlpModel::new_he(&[6, 8, 5, 1], seed).unwrap();
            let batch = random_batch(&mut rng, 6, 7);
            let err = gradient_check(&m, &batch, 60, seed).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let m = MlpModel::new_he(&[4, 3, 1], 1).unwrap();
        let batch = vec![Sample::new(vec![0.0; 4], 0.5), Sample::new(vec![0.0; 4], 2.0)];
        let g = m.gradient(&batch).unwrap();
        assert!(g[..12].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_is_closed_form() {
        let m = MlpModel::new_he(&[3, 1], 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = random_batch(&mut rng, 3, 5);
        let g = m.gradient(&batch).unwrap();
        let (w, b) = (&m.weights()[0], m.biases()[0][0]);
        let mut gw = [0.0; 3];
        let mut gb = 0.0;
        for s in &batch {
            let r = w[0] * s.input[0] + w[1] * s.input[1] + w[2] * s.input[2] + b
                - (s.label + 1e-6).ln();
            for k in 0..3 {
                gw[k] += 2.0 * r * s.input[k] / 5.0;
            }
            gb += 2.0 * r / 5.0;
        }
        for k in 0..3 {
            assert!((g[k] - gw[k]).abs() < 1e-12, "{} vs {}", g[k], gw[k]);
        }
        assert!((g[3] - gb).abs() < 1e-12);
    }

    #[test]
    fn memorises_single_sample() {
        let s = vec![Sample::new(vec![1.0, 0.0, 1.0], 0.7)];
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 1,
            learning_rate: 0.05,
            dropout_rate: 0.0,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (m, report) = train(&s, &cfg, &[3, 1]).unwrap();
        assert!(m.loss(&s).unwrap() < 1e-4);
        assert!(report.epochs.last().unwrap().validation_loss.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = random_batch(&mut rng, 5, 40);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&data, &cfg, &[5, 6, 1]).unwrap();
        let (b, rb) = train(&data, &cfg, &[5, 6, 1]).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let (t, v) = split_indices(50, 0.2, 9);
        assert_eq!(v.len(), 10);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Sample> = random_batch(&mut rng, 4, 20)
            .into_iter()
            .map(|s| Sample::new(s.input.iter().map(|v| v * 1e3).collect(), s.label))
            .collect();
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e3,
            momentum: 0.99,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&data, &cfg, &[4, 8, 1]),
            Err(LearnError::Diverged { .. })
        ));
    }
}
