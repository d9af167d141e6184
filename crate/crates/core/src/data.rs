//! Fusion-vector datasets and regression metrics.
//!
//! Dataset files are comma-separated text with a header row:
//!
//! ```text
//! id,f00,f01,...,f15,affinity
//! 1abc,0.12,0.0,...,1.3,6.52
//! ```
//!
//! Columns `f00..f09` are the 3D-CNN penultimate activations and
//! `f10..f15` the SG-CNN ones. Values are written with Rust's shortest
//! round-trip formatting, so save/load is exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{CNN3D_FEATURES, SGCNN_FEATURES};

pub const FEATURE_DIM: usize = CNN3D_FEATURES + SGCNN_FEATURES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSample {
    pub id: String,
    pub features: Vec<f64>,
    pub affinity: f64,
}

impl FusionSample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, affinity: f64) -> Result<Self> {
        let id = id.into();
        if features.len() != FEATURE_DIM {
            return Err(Error::FeatureArity {
                id,
                got: features.len(),
                expected: FEATURE_DIM,
            });
        }
        if !affinity.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample `{id}` has non-finite affinity"
            )));
        }
        Ok(Self {
            id,
            features,
            affinity,
        })
    }
}

fn header() -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend((0..FEATURE_DIM).map(|i| format!("f{i:02}")));
    h.push("affinity".into());
    h
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<FusionSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{s}` is not a number"),
            })
        };
        let id = record.get(0).unwrap_or_default().to_string();
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: format!("record `{id}` has no affinity column"),
            });
        }
        let values = record
            .iter()
            .skip(1)
            .map(parse)
            .collect::<Result<Vec<f64>>>()?;
        let (features, affinity) = values.split_at(values.len() - 1);
        out.push(FusionSample::new(id, features.to_vec(), affinity[0])?);
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(writer: W, samples: &[FusionSample]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header())?;
    for s in samples {
        let mut row = vec![s.id.clone()];
        row.extend(s.features.iter().map(f64::to_string));
        row.push(s.affinity.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a dataset file. An empty file is an empty dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<FusionSample>> {
    read_dataset(File::open(path)?)
}

pub fn save_dataset(samples: &[FusionSample], path: impl AsRef<Path>) -> Result<()> {
    write_dataset(File::create(path)?, samples)
}

/// Assembles samples from externally produced penultimate activations of
/// the two front-end networks (10 and 6 values per complex).
pub fn from_activations(
    ids: &[String],
    cnn3d: &[Vec<f64>],
    sgcnn: &[Vec<f64>],
    affinities: &[f64],
) -> Result<Vec<FusionSample>> {
    let n = ids.len();
    for len in [cnn3d.len(), sgcnn.len(), affinities.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    ids.iter()
        .zip(cnn3d)
        .zip(sgcnn)
        .zip(affinities)
        .map(|(((id, a), b), &y)| {
            if a.len() != CNN3D_FEATURES || b.len() != SGCNN_FEATURES {
                return Err(Error::FeatureArity {
                    id: id.clone(),
                    got: a.len() + b.len(),
                    expected: FEATURE_DIM,
                });
            }
            let mut f = a.clone();
            f.extend_from_slice(b);
            FusionSample::new(id.clone(), f, y)
        })
        .collect()
}

/// Weights of the four single-qubit Z parities in the synthetic target.
const TARGET_WEIGHTS: [f64; 4] = [1.0, -0.7, 0.5, 0.3];

/// Per-feature mean of the pre-censoring Gaussian, spread over [-0.5, 1.5].
fn feature_mean(j: usize) -> f64 {
    -0.5 + 2.0 * ((j * 7) % FEATURE_DIM) as f64 / (FEATURE_DIM - 1) as f64
}

/// Noise-free synthetic affinity: `6 + 4 Σ_k c_k <Z_k>` of the amplitude
/// encoding of `features`, i.e. a smooth, scale-invariant function of the
/// feature direction.
pub fn synth_target(features: &[f64]) -> f64 {
    let norm_sq: f64 = features.iter().map(|x| x * x).sum();
    let mut parity = [0.0; 4];
    for (j, x) in features.iter().enumerate() {
        let p = x * x / norm_sq;
        for (k, acc) in parity.iter_mut().enumerate() {
            if j >> k & 1 == 0 {
                *acc += p;
            } else {
                *acc -= p;
            }
        }
    }
    6.0 + 4.0 * parity.iter().zip(TARGET_WEIGHTS).map(|(z, c)| z * c).sum::<f64>()
}

/// `n` samples with ReLU-censored Gaussian features (unit variance,
/// per-coordinate means in [-0.5, 1.5]) and affinity
/// `synth_target(features) + N(0, noise_sigma^2)`.
pub fn synth_dataset(n: usize, seed: u64, noise_sigma: f64) -> Result<Vec<FusionSample>> {
    if n == 0 {
        return Err(Error::Empty("synthetic dataset"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|i| {
            let features = loop {
                let f: Vec<f64> = (0..FEATURE_DIM)
                    .map(|j| (feature_mean(j) + unit.sample(&mut rng)).max(0.0))
                    .collect();
                if f.iter().any(|&x| x > 0.0) {
                    break f;
                }
            };
            let affinity = synth_target(&features) + noise_sigma * unit.sample(&mut rng);
            FusionSample::new(format!("syn{i:05}"), features, affinity)
        })
        .collect()
}

/// Seeded shuffle, then the last `round(fraction * n)` samples form the
/// validation split.
pub fn split<T: Clone>(samples: &[T], validation_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction {validation_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (validation_fraction * samples.len() as f64).round() as usize;
    let (train, val) = idx.split_at(samples.len() - n_val);
    Ok((
        train.iter().map(|&i| samples[i].clone()).collect(),
        val.iter().map(|&i| samples[i].clone()).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub pearson: f64,
    pub spearman: f64,
}

impl MetricReport {
    pub fn mse(&self) -> f64 {
        self.rmse * self.rmse
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// 1-based fractional ranks; ties share their average rank.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// RMSE, MAE, R², Pearson and Spearman (average-rank ties).
///
/// Constant labels are an error. Constant predictions yield zero correlations.
pub fn evaluate(predictions: &[f64], labels: &[f64]) -> Result<MetricReport> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("label vector"));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::ConstantLabels);
    }
    let n = labels.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (p, y) in predictions.iter().zip(labels) {
        sq += (p - y) * (p - y);
        abs += (p - y).abs();
    }
    let my = mean(labels);
    let ss_tot: f64 = labels.iter().map(|y| (y - my) * (y - my)).sum();
    Ok(MetricReport {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        r2: 1.0 - sq / ss_tot,
        pearson: pearson(predictions, labels),
        spearman: pearson(&fractional_ranks(predictions), &fractional_ranks(labels)),
    })
}
