//! ADAM, mini-batch MSE training and convergence logging.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FusionSample;
use crate::error::{Error, Result};
use crate::nn::ClassicalFusion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 100,
            epochs: 100,
            patience: 20,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            validation_fraction: 0.25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("ADAM betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// ADAM with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// A scalar regressor trainable by [`train`].
pub trait Regressor: Clone + Send + Sync {
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn predict(&self, features: &[f64]) -> Result<f64>;

    /// Squared error `(predict(x) - label)^2` and its gradient.
    fn sample_gradient(&self, features: &[f64], label: f64) -> Result<(f64, Vec<f64>)>;

    /// Overwrites the bias of the output unit.
    fn set_output_bias(&mut self, bias: f64);

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

/// Mean squared error over `batch` and its gradient; samples are evaluated
/// in parallel and reduced in order, so the result is thread-count independent.
pub fn batch_gradient<M: Regressor>(model: &M, batch: &[(&[f64], f64)]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let per_sample: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|(x, y)| model.sample_gradient(x, *y))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

impl Regressor for ClassicalFusion {
    fn params(&self) -> Vec<f64> {
        ClassicalFusion::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        ClassicalFusion::set_params(self, params)
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        self.forward(features)
    }

    fn sample_gradient(&self, features: &[f64], label: f64) -> Result<(f64, Vec<f64>)> {
        let residual = self.forward(features)? - label;
        Ok((residual * residual, self.backward(features, 2.0 * residual)?))
    }

    fn set_output_bias(&mut self, bias: f64) {
        self.trunk_mut().output_layer_mut().bias_mut()[0] = bias;
    }

    fn num_params(&self) -> usize {
        self.total_params()
    }
}

/// Affine map of labels onto `[0, 1]` fitted on the training labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub min: f64,
    pub span: f64,
}

impl LabelScaler {
    pub fn identity() -> Self {
        Self { min: 0.0, span: 1.0 }
    }

    pub fn fit(labels: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in labels {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        if !lo.is_finite() {
            return Err(Error::Empty("label set"));
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        Ok(Self { min: lo, span })
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.min) / self.span
    }

    pub fn unscale(&self, y: f64) -> f64 {
        y * self.span + self.min
    }
}

/// Sets the model's output bias to the mean scaled training label.
pub fn warm_start_output_bias<M: Regressor>(
    model: &mut M,
    scaler: &LabelScaler,
    train_set: &[FusionSample],
) {
    if train_set.is_empty() {
        return;
    }
    let mean = train_set.iter().map(|s| scaler.scale(s.affinity)).sum::<f64>()
        / train_set.len() as f64;
    model.set_output_bias(mean);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_ms: f64,
}

/// Losses are MSE on scaled labels. `initial` is measured before any update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    /// Epoch (0 = initial) whose parameters were retained.
    pub best_epoch: usize,
}

impl ConvergenceLog {
    pub fn best_val_loss(&self) -> f64 {
        std::iter::once(&self.initial)
            .chain(&self.epochs)
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min)
    }

    /// `epoch,train_loss,val_loss,wall_time_ms` with the initial row as epoch 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_time_ms\n");
        for r in std::iter::once(&self.initial).chain(&self.epochs) {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                r.epoch, r.train_loss, r.val_loss, r.wall_time_ms
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub scaler: LabelScaler,
    pub log: ConvergenceLog,
}

impl<M: Regressor> Trained<M> {
    /// Prediction in label units.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.scaler.unscale(self.model.predict(features)?))
    }

    pub fn predict_all(&self, samples: &[FusionSample]) -> Result<Vec<f64>> {
        samples
            .par_iter()
            .map(|s| self.predict(&s.features))
            .collect()
    }
}

fn scaled_mse<M: Regressor>(model: &M, scaler: &LabelScaler, samples: &[FusionSample]) -> Result<f64> {
    let errs: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let r = model.predict(&s.features)? - scaler.scale(s.affinity);
            Ok(r * r)
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / samples.len() as f64)
}

/// Mini-batch ADAM on MSE of min-max scaled labels.
///
/// The batch order is reshuffled every epoch from `config.seed`. The returned
/// model holds the parameters of the epoch with the lowest validation loss
/// (training loss when `val_set` is empty). The model's own parameters are
/// used as the starting point unchanged.
pub fn train<M: Regressor>(
    mut model: M,
    train_set: &[FusionSample],
    val_set: &[FusionSample],
    config: &TrainConfig,
) -> Result<Trained<M>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let scaler = LabelScaler::fit(train_set.iter().map(|s| s.affinity))?;
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;
    let val_loss = |m: &M, train_loss: f64| -> Result<f64> {
        if val_set.is_empty() {
            Ok(train_loss)
        } else {
            scaled_mse(m, &scaler, val_set)
        }
    };

    let initial_train = scaled_mse(&model, &scaler, train_set)?;
    let initial = EpochRecord {
        epoch: 0,
        train_loss: initial_train,
        val_loss: val_loss(&model, initial_train)?,
        wall_time_ms: elapsed(),
    };
    let mut best = (initial.val_loss, 0, model.params());
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    (s.features.as_slice(), scaler.scale(s.affinity))
                })
                .collect();
            let (loss, grad) = batch_gradient(&model, &batch)?;
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grad)?;
            model.set_params(&params)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss: val_loss(&model, train_loss)?,
            wall_time_ms: elapsed(),
        };
        if record.val_loss < best.0 {
            best = (record.val_loss, epoch, params.clone());
        }
        epochs.push(record);
        if config.patience > 0 && epoch - best.1 >= config.patience {
            break;
        }
    }

    model.set_params(&best.2)?;
    Ok(Trained {
        model,
        scaler,
        log: ConvergenceLog {
            initial,
            epochs,
            best_epoch: best.1,
        },
    })
}
