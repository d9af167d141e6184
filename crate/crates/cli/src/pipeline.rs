//! Data preparation, checkpoints and prediction helpers shared by commands.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use qfusion::data::{evaluate, load_dataset, split, synth_dataset, FusionSample, MetricReport};
use qfusion::nn::ClassicalFusion;
use qfusion::qnn::{QnnCheckpoint, QnnModel};
use qfusion::train::{train, warm_start_output_bias, LabelScaler, Regressor, Trained};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::Output;

pub struct Splits {
    pub train: Vec<FusionSample>,
    pub validation: Vec<FusionSample>,
    pub test: Vec<FusionSample>,
}

impl Splits {
    pub fn all(&self) -> Vec<FusionSample> {
        let mut v = self.train.clone();
        v.extend(self.validation.iter().cloned());
        v.extend(self.test.iter().cloned());
        v
    }
}

pub fn load_data(config: &RunConfig) -> anyhow::Result<Vec<FusionSample>> {
    let data = match &config.data.path {
        Some(p) => load_dataset(p).with_context(|| format!("cannot load dataset {}", p.display()))?,
        None => synth_dataset(config.data.synth_samples, config.seed, config.data.synth_noise)?,
    };
    if data.len() < 3 {
        bail!("dataset has {} samples; at least 3 are needed", data.len());
    }
    Ok(data)
}

/// Test split first, then the remainder into train and validation.
pub fn splits(config: &RunConfig) -> anyhow::Result<Splits> {
    let data = load_data(config)?;
    let (rest, test) = split(&data, config.data.test_fraction, config.seed)?;
    let (train, validation) = split(&rest, config.train.validation_fraction, config.seed.wrapping_add(1))?;
    if train.is_empty() || test.is_empty() {
        bail!("dataset of {} samples is too small for the configured splits", data.len());
    }
    Ok(Splits {
        train,
        validation,
        test,
    })
}

pub fn labels(samples: &[FusionSample]) -> Vec<f64> {
    samples.iter().map(|s| s.affinity).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassicalCheckpoint {
    pub net: ClassicalFusion,
    pub scaler: LabelScaler,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FusionCheckpoint {
    Quantum(QnnCheckpoint),
    Classical(ClassicalCheckpoint),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub config_hash: String,
    pub checkpoint: FusionCheckpoint,
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<FusionCheckpoint> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .with_context(|| format!("invalid checkpoint {}", path.display()))?;
    Ok(file.checkpoint)
}

pub fn write_checkpoint(out: &Output, path: &Path, checkpoint: FusionCheckpoint) -> anyhow::Result<()> {
    out.write_json(
        path,
        &CheckpointFile {
            config_hash: out.hash().to_string(),
            checkpoint,
        },
    )
}

/// A fitted model in label units.
pub enum Fitted {
    Quantum(QnnModel, LabelScaler),
    Classical(ClassicalFusion, LabelScaler),
}

impl Fitted {
    pub fn from_checkpoint(ckpt: FusionCheckpoint) -> anyhow::Result<Self> {
        Ok(match ckpt {
            FusionCheckpoint::Quantum(q) => {
                let (model, scaler) = QnnModel::from_checkpoint(q)?;
                Fitted::Quantum(model, scaler.unwrap_or_else(LabelScaler::identity))
            }
            FusionCheckpoint::Classical(c) => Fitted::Classical(c.net, c.scaler),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Fitted::Quantum(..) => "quantum",
            Fitted::Classical(..) => "classical",
        }
    }

    pub fn predict_all(&self, samples: &[FusionSample]) -> anyhow::Result<Vec<f64>> {
        Ok(match self {
            Fitted::Quantum(m, s) => predictions(m, s, samples)?,
            Fitted::Classical(m, s) => predictions(m, s, samples)?,
        })
    }
}

pub fn predictions<M: Regressor>(
    model: &M,
    scaler: &LabelScaler,
    samples: &[FusionSample],
) -> anyhow::Result<Vec<f64>> {
    let scaled = samples
        .par_iter()
        .map(|s| model.predict(&s.features))
        .collect::<qfusion::Result<Vec<f64>>>()?;
    Ok(scaled.into_iter().map(|y| scaler.unscale(y)).collect())
}

pub fn metrics(predictions: &[f64], samples: &[FusionSample]) -> anyhow::Result<MetricReport> {
    Ok(evaluate(predictions, &labels(samples))?)
}

pub struct Fit<M> {
    pub trained: Trained<M>,
    pub train_ms: f64,
}

/// Bias warm start, then ADAM training with the `[train]` settings.
pub fn fit<M: Regressor>(mut model: M, config: &RunConfig, splits: &Splits) -> anyhow::Result<Fit<M>> {
    let scaler = LabelScaler::fit(splits.train.iter().map(|s| s.affinity))?;
    warm_start_output_bias(&mut model, &scaler, &splits.train);
    let start = Instant::now();
    let trained = train(model, &splits.train, &splits.validation, &config.train)?;
    Ok(Fit {
        trained,
        train_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn new_quantum(config: &RunConfig) -> anyhow::Result<QnnModel> {
    Ok(QnnModel::new(config.encoder()?, config.model.ansatz, config.model.layers, config.seed)?)
}

pub fn new_classical(config: &RunConfig) -> ClassicalFusion {
    ClassicalFusion::new(&mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// The quantum model named by `model.checkpoint`, or a freshly trained one
/// saved to `checkpoints/quantum.json`.
pub fn quantum_model(
    config: &RunConfig,
    out: &Output,
    splits: &Splits,
) -> anyhow::Result<(QnnModel, LabelScaler)> {
    if let Some(path) = &config.model.checkpoint {
        return match Fitted::from_checkpoint(read_checkpoint(path)?)? {
            Fitted::Quantum(m, s) => Ok((m, s)),
            Fitted::Classical(..) => bail!("{} holds a classical model; a quantum one is needed", path.display()),
        };
    }
    eprintln!("no model.checkpoint given; training a quantum model first");
    let fit = fit(new_quantum(config)?, config, splits)?;
    let t = fit.trained;
    out.write_csv(&out.log("quantum_convergence.csv"), &t.log.to_csv())?;
    write_checkpoint(
        out,
        &out.checkpoint("quantum.json"),
        FusionCheckpoint::Quantum(t.model.to_checkpoint(Some(t.scaler))),
    )?;
    Ok((t.model, t.scaler))
}

pub fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

/// Mean over samples and components of the squared difference.
pub fn expectation_mse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            sum += (u - v).powi(2);
            n += 1;
        }
    }
    sum / n.max(1) as f64
}
