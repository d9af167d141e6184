//! Learned regression error mitigation (DREM) and zero-noise extrapolation.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_ansatz, AnsatzId, Circuit};
use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet};
use crate::noise::{noisy_execute, ChannelKind, KrausChannel};
use crate::qnn::{QnnModel, QnnOutput};
use crate::sim::StateVector;
use crate::train::{Adam, TrainConfig};

pub const DREM_HIDDEN: [usize; 2] = [32, 16];
pub const DEFAULT_ALPHA: f64 = 1e-5;

/// `k → 32 → 16 → k` correction network applied to noisy expectations.
///
/// Inputs are standardized with per-component statistics fixed when the
/// layer is fitted; they are not trainable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DremLayer {
    net: DenseNet,
    alpha: f64,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    frozen: bool,
}

impl DremLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("expectation vector"));
        }
        let net = DenseNet::init(
            &[dim, DREM_HIDDEN[0], DREM_HIDDEN[1], dim],
            &[Activation::Relu, Activation::Relu, Activation::Identity],
            rng,
        )?;
        Ok(Self {
            net,
            alpha,
            input_mean: vec![0.0; dim],
            input_scale: vec![1.0; dim],
            frozen: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn num_params(&self) -> usize {
        self.net.total_params()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Hash of the weights and input statistics.
    pub fn checksum(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.net.checksum().hash(&mut h);
        for v in self.input_mean.iter().chain(&self.input_scale) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn standardize(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: e.len(),
            });
        }
        Ok(e.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    fn forward(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.standardize(e)?)
    }

    /// Corrected expectations. Pure classical evaluation.
    pub fn apply(&self, noisy: &[f64]) -> Result<Vec<f64>> {
        if !self.frozen {
            return Err(Error::NotFrozen);
        }
        self.forward(noisy)
    }

    /// Gradient of `upstream · apply(noisy)` with respect to `noisy`.
    pub fn input_gradient(&self, noisy: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let g = self.net.backward(&self.standardize(noisy)?, upstream)?;
        Ok(g.input.iter().zip(&self.input_scale).map(|(d, s)| d / s).collect())
    }
}

pub fn apply_drem(layer: &DremLayer, noisy: &[f64]) -> Result<Vec<f64>> {
    layer.apply(noisy)
}

/// `head(apply_drem(noisy expectations))`.
pub fn mitigated_forward(
    model: &QnnModel,
    layer: &DremLayer,
    features: &[f64],
    channel: &KrausChannel,
) -> Result<QnnOutput> {
    let noisy = model.noisy_expectations(features, channel)?;
    let expectations = layer.apply(&noisy)?;
    let prediction = model.head_output(&expectations)?;
    Ok(QnnOutput {
        expectations,
        prediction,
    })
}

/// What a corpus was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub channel: ChannelKind,
    pub p: f64,
    pub ansatz: AnsatzId,
    pub layers: usize,
    pub num_qnns: usize,
    pub encoder: EncoderConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationPair {
    pub qnn: usize,
    pub input: usize,
    pub noisy: Vec<f64>,
    pub noiseless: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DremCorpus {
    pub provenance: CorpusSpec,
    pub inputs: Vec<Vec<f64>>,
    /// Circuit angles of each QNN, indexed by `ExpectationPair::qnn`.
    pub qnn_params: Vec<Vec<f64>>,
    pub pairs: Vec<ExpectationPair>,
}

/// Angles of the `index`-th random QNN of a corpus, uniform in `[0, 2π)`.
pub fn corpus_qnn_params(seed: u64, index: usize, num_params: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..num_params)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect()
}

/// Noisy/noiseless expectation pairs for every (QNN, input) combination.
pub fn build_drem_corpus(spec: &CorpusSpec, inputs: &[Vec<f64>]) -> Result<DremCorpus> {
    if spec.num_qnns == 0 {
        return Err(Error::InvalidConfig("num_qnns must be at least 1".into()));
    }
    if inputs.is_empty() {
        return Err(Error::Empty("corpus inputs"));
    }
    spec.encoder.validate()?;
    let circuit = build_ansatz(spec.ansatz, spec.encoder.num_qubits(), spec.layers)?;
    let channel = KrausChannel::new(spec.channel, spec.p)?;
    let encoded: Vec<StateVector> = inputs
        .iter()
        .map(|x| spec.encoder.encode(x))
        .collect::<Result<_>>()?;

    let qnn_params: Vec<Vec<f64>> = (0..spec.num_qnns)
        .map(|i| corpus_qnn_params(spec.seed, i, circuit.num_params()))
        .collect();
    let per_qnn: Vec<Vec<ExpectationPair>> = qnn_params
        .par_iter()
        .enumerate()
        .map(|(qnn, params)| {
            let bound = circuit.bind(params)?;
            encoded
                .iter()
                .enumerate()
                .map(|(input, psi)| {
                    let mut state = psi.clone();
                    bound.run(&mut state)?;
                    let rho = noisy_execute(&bound, psi.to_density_matrix(), &channel)?;
                    Ok(ExpectationPair {
                        qnn,
                        input,
                        noisy: rho.expectations_z(),
                        noiseless: state.expectations_z(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(DremCorpus {
        provenance: spec.clone(),
        inputs: inputs.to_vec(),
        qnn_params,
        pairs: per_qnn.into_iter().flatten().collect(),
    })
}

fn mean_sq_error<'a>(pairs: impl Iterator<Item = (&'a [f64], Vec<f64>)>) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (target, estimate) in pairs {
        for (a, b) in target.iter().zip(&estimate) {
            sum += (a - b) * (a - b);
        }
        count += target.len();
    }
    if count == 0 {
        return Err(Error::Empty("corpus"));
    }
    Ok(sum / count as f64)
}

impl DremCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.noisy.len())
    }

    /// Per-component MSE between noisy and noiseless expectations.
    pub fn unmitigated_mse(&self) -> Result<f64> {
        mean_sq_error(
            self.pairs
                .iter()
                .map(|p| (p.noiseless.as_slice(), p.noisy.clone())),
        )
    }

    pub fn mitigated_mse(&self, layer: &DremLayer) -> Result<f64> {
        let corrected: Vec<Vec<f64>> = self
            .pairs
            .par_iter()
            .map(|p| layer.apply(&p.noisy))
            .collect::<Result<_>>()?;
        mean_sq_error(
            self.pairs
                .iter()
                .map(|p| p.noiseless.as_slice())
                .zip(corrected),
        )
    }

    /// Splits off the pairs of the last `held_out` QNNs.
    pub fn split_qnns(&self, held_out: usize) -> Result<(DremCorpus, DremCorpus)> {
        let n = self.qnn_params.len();
        if held_out == 0 || held_out >= n {
            return Err(Error::InvalidConfig(format!(
                "held-out QNN count must lie in 1..{n}, got {held_out}"
            )));
        }
        let cut = n - held_out;
        let part = |keep: &dyn Fn(usize) -> bool| DremCorpus {
            provenance: self.provenance.clone(),
            inputs: self.inputs.clone(),
            qnn_params: self.qnn_params.clone(),
            pairs: self.pairs.iter().filter(|p| keep(p.qnn)).cloned().collect(),
        };
        Ok((part(&|q| q < cut), part(&|q| q >= cut)))
    }

    pub fn circuit(&self) -> Result<Circuit> {
        build_ansatz(
            self.provenance.ansatz,
            self.provenance.encoder.num_qubits(),
            self.provenance.layers,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let corpus: DremCorpus = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if corpus
            .pairs
            .iter()
            .any(|p| p.noisy.len() != p.noiseless.len())
        {
            return Err(Error::InvalidConfig("corpus pair lengths differ".into()));
        }
        Ok(corpus)
    }
}

/// Fits a DREM layer by mini-batch ADAM on
/// `MSE(net(noisy), noiseless) + alpha * |W|^2` and returns it frozen.
pub fn train_drem(corpus: &DremCorpus, alpha: f64, config: &TrainConfig) -> Result<DremLayer> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let k = corpus.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layer = DremLayer::new(k, alpha, &mut rng)?;

    let n = corpus.len() as f64;
    for j in 0..k {
        let mean = corpus.pairs.iter().map(|p| p.noisy[j]).sum::<f64>() / n;
        let var = corpus
            .pairs
            .iter()
            .map(|p| (p.noisy[j] - mean).powi(2))
            .sum::<f64>()
            / n;
        layer.input_mean[j] = mean;
        layer.input_scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    let inputs: Vec<Vec<f64>> = corpus
        .pairs
        .iter()
        .map(|p| layer.standardize(&p.noisy))
        .collect::<Result<_>>()?;

    let mask = layer.net.weight_mask();
    let mut params = layer.net.params();
    let mut adam = Adam::new(params.len(), config);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let net = &layer.net;
            let grads: Vec<Vec<f64>> = chunk
                .par_iter()
                .map(|&i| {
                    let out = net.forward(&inputs[i])?;
                    let upstream: Vec<f64> = out
                        .iter()
                        .zip(&corpus.pairs[i].noiseless)
                        .map(|(o, y)| 2.0 * (o - y) / k as f64)
                        .collect();
                    Ok(net.backward(&inputs[i], &upstream)?.params)
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; params.len()];
            for g in grads {
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b * scale);
            }
            for ((g, p), &is_weight) in grad.iter_mut().zip(&params).zip(&mask) {
                if is_weight {
                    *g += 2.0 * alpha * p;
                }
            }
            adam.step(&mut params, &grad)?;
            layer.net.set_params(&params)?;
        }
    }
    layer.freeze();
    Ok(layer)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZneEstimate {
    /// Extrapolated `<Z>` per qubit.
    pub expectations: Vec<f64>,
    pub scale_factors: Vec<usize>,
    /// Measured `<Z>` per scale factor.
    pub per_scale: Vec<Vec<f64>>,
    /// Gates executed over all folded circuits.
    pub gate_executions: u64,
}

/// Scale factors must start at 1, be odd and strictly increase.
pub fn validate_scale_factors(scales: &[usize]) -> Result<()> {
    if scales.first() != Some(&1) {
        return Err(Error::InvalidConfig(
            "scale factors must start at 1".into(),
        ));
    }
    for &s in scales {
        if s.is_multiple_of(2) {
            return Err(Error::InvalidScaleFactor(s as i64));
        }
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "scale factors must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Value at `x = 0` of the least-squares polynomial of degree
/// `min(points - 1, 2)` through `(xs, ys)`.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let d = (xs.len() - 1).min(2) + 1;
    // normal equations A^T A c = A^T y with Vandermonde A
    let mut m = vec![vec![0.0; d + 1]; d];
    for (&x, &y) in xs.iter().zip(ys) {
        let powers: Vec<f64> = (0..d).map(|i| x.powi(i as i32)).collect();
        for r in 0..d {
            for c in 0..d {
                m[r][c] += powers[r] * powers[c];
            }
            m[r][d] += powers[r] * y;
        }
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        m.swap(col, pivot);
        let lead = m[col][col];
        if lead.abs() < 1e-300 {
            return Err(Error::InvalidConfig("singular extrapolation system".into()));
        }
        for r in 0..d {
            if r != col {
                let f = m[r][col] / lead;
                for c in col..=d {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok(m[0][d] / m[0][0])
}

/// Runs `circuit` globally folded at each scale factor under `channel` and
/// extrapolates every `<Z>` to zero noise.
pub fn zne_expectations(
    circuit: &Circuit,
    params: &[f64],
    initial: &StateVector,
    channel: &KrausChannel,
    scale_factors: &[usize],
) -> Result<ZneEstimate> {
    validate_scale_factors(scale_factors)?;
    let mut per_scale = Vec::with_capacity(scale_factors.len());
    let mut gate_executions = 0u64;
    for &s in scale_factors {
        let bound = circuit.fold_global(s)?.bind(params)?;
        gate_executions += bound.num_gates() as u64;
        let rho = noisy_execute(&bound, initial.to_density_matrix(), channel)?;
        per_scale.push(rho.expectations_z());
    }
    let xs: Vec<f64> = scale_factors.iter().map(|&s| s as f64).collect();
    let expectations = (0..circuit.num_qubits())
        .map(|q| {
            let ys: Vec<f64> = per_scale.iter().map(|e| e[q]).collect();
            extrapolate_to_zero(&xs, &ys)
        })
        .collect::<Result<_>>()?;
    Ok(ZneEstimate {
        expectations,
        scale_factors: scale_factors.to_vec(),
        per_scale,
        gate_executions,
    })
}

pub fn zne_estimate(
    model: &QnnModel,
    features: &[f64],
    channel: &KrausChannel,
    scale_factors: &[usize],
) -> Result<ZneEstimate> {
    zne_expectations(
        model.circuit(),
        model.theta(),
        &model.encode(features)?,
        channel,
        scale_factors,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn drem_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(DremLayer::new(4, DEFAULT_ALPHA, &mut rng).unwrap().num_params(), 756);
    }

    #[test]
    fn unfrozen_layer_refuses_to_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = DremLayer::new(4, DEFAULT_ALPHA, &mut rng).unwrap();
        assert!(matches!(layer.apply(&[0.0; 4]), Err(Error::NotFrozen)));
        layer.freeze();
        assert_eq!(layer.apply(&[0.1; 4]).unwrap().len(), 4);
        assert!(layer.apply(&[0.1; 3]).is_err());
    }

    #[test]
    fn extrapolation_fits() {
        assert_abs_diff_eq!(extrapolate_to_zero(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 1.0, epsilon = 1e-12);
        // exact quadratic through three points
        let f = |x: f64| 0.5 - 0.2 * x + 0.03 * x * x;
        let xs = [1.0, 3.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        assert_abs_diff_eq!(extrapolate_to_zero(&xs, &ys).unwrap(), 0.5, epsilon = 1e-12);
        // least squares on four points of a quadratic is still exact
        let xs = [1.0, 3.0, 5.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        assert_abs_diff_eq!(extrapolate_to_zero(&xs, &ys).unwrap(), 0.5, epsilon = 1e-10);
        assert_eq!(extrapolate_to_zero(&[1.0], &[0.3]).unwrap(), 0.3);
    }

    #[test]
    fn scale_factor_validation() {
        assert!(validate_scale_factors(&[1, 3, 5]).is_ok());
        assert!(validate_scale_factors(&[3, 5]).is_err());
        assert!(validate_scale_factors(&[1, 2]).is_err());
        assert!(validate_scale_factors(&[1, 5, 3]).is_err());
        assert!(validate_scale_factors(&[]).is_err());
    }

    #[test]
    fn corpus_qnn_streams_are_distinct_and_stable() {
        let a = corpus_qnn_params(7, 0, 5);
        assert_eq!(a, corpus_qnn_params(7, 0, 5));
        assert_ne!(a, corpus_qnn_params(7, 1, 5));
        assert!(a.iter().all(|t| (0.0..std::f64::consts::TAU).contains(t)));
    }
}
