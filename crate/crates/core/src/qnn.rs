//! The quantum fusion model: encoder, PQC, per-qubit `<Z>` readout and a
//! ReLU head.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_ansatz, AnsatzId, BoundCircuit, Circuit};
use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::mitigation::DremLayer;
use crate::nn::{Activation, DenseNet};
use crate::noise::{noisy_execute, KrausChannel};
use crate::sim::{DensityMatrix, GateMatrix, StateVector};
use crate::train::{batch_gradient, LabelScaler, Regressor};

#[derive(Clone, Debug, PartialEq)]
pub struct QnnOutput {
    pub expectations: Vec<f64>,
    pub prediction: f64,
}

/// Simulator state the Jacobian routine can evolve.
trait Evolve: Clone {
    fn step(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()>;
    fn readout(&self) -> Vec<f64>;
}

impl Evolve for StateVector {
    fn step(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
        self.apply_unchecked(gate, targets);
        Ok(())
    }

    fn readout(&self) -> Vec<f64> {
        self.expectations_z()
    }
}

#[derive(Clone)]
struct NoisyState<'a> {
    rho: DensityMatrix,
    channel: &'a KrausChannel,
}

impl Evolve for NoisyState<'_> {
    fn step(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
        self.rho.apply_unchecked(gate, targets);
        if self.channel.p() != 0.0 {
            for &q in targets {
                self.channel.apply(&mut self.rho, q)?;
            }
        }
        Ok(())
    }

    fn readout(&self) -> Vec<f64> {
        self.rho.expectations_z()
    }
}

/// Expectations and their contraction with `weights` differentiated by
/// parameter shift: returns `(<Z>, d(weights · <Z>)/d params)`.
///
/// One running prefix state is kept; each shifted term clones it, applies the
/// shifted gate and replays the suffix.
fn shifted_vjp<S: Evolve>(
    circuit: &Circuit,
    bound: &BoundCircuit,
    params: &[f64],
    initial: S,
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut grad = vec![0.0; circuit.num_params()];
    let mut state = initial;
    let dot = |e: Vec<f64>| e.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
    for (i, (spec, gate)) in circuit.gates().iter().zip(bound.gates()).enumerate() {
        if let Some(rule) = spec.kind.shift_rule() {
            let terms = rule.terms();
            for (a, &slot) in spec.slots.iter().enumerate() {
                let mut d = 0.0;
                for &(shift, coef) in &terms {
                    let mut s = state.clone();
                    s.step(&spec.bind_shifted(params, a, shift), &spec.targets)?;
                    for g in &bound.gates()[i + 1..] {
                        s.step(&g.matrix, &g.targets)?;
                    }
                    d += coef * dot(s.readout());
                }
                grad[slot] += spec.angle_sign() * d;
            }
        }
        state.step(&gate.matrix, &gate.targets)?;
    }
    Ok((state.readout(), grad))
}

/// Parameter-shift Jacobian `d<Z_q>/d params[j]`, indexed `[j][q]`.
pub fn expectation_jacobian(
    circuit: &Circuit,
    params: &[f64],
    initial: &StateVector,
) -> Result<Vec<Vec<f64>>> {
    let bound = circuit.bind(params)?;
    bound.check_width(initial.num_qubits())?;
    let n = circuit.num_qubits();
    let mut jac = vec![vec![0.0; n]; circuit.num_params()];
    for q in 0..n {
        let mut w = vec![0.0; n];
        w[q] = 1.0;
        let (_, g) = shifted_vjp(circuit, &bound, params, initial.clone(), &w)?;
        for (row, v) in jac.iter_mut().zip(g) {
            row[q] = v;
        }
    }
    Ok(jac)
}

fn uniform_angles<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..TAU)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QnnModel {
    encoder: EncoderConfig,
    ansatz: AnsatzId,
    layers: usize,
    circuit: Circuit,
    theta: Vec<f64>,
    head: DenseNet,
    seed: u64,
}

impl QnnModel {
    /// Angles uniform in `[0, 2π)` and a `k→1` ReLU head, both from `seed`.
    pub fn new(encoder: EncoderConfig, ansatz: AnsatzId, layers: usize, seed: u64) -> Result<Self> {
        encoder.validate()?;
        let k = encoder.num_qubits();
        let circuit = build_ansatz(ansatz, k, layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = uniform_angles(circuit.num_params(), &mut rng);
        let head = DenseNet::init(&[k, 1], &[Activation::Relu], &mut rng)?;
        Ok(Self {
            encoder,
            ansatz,
            layers,
            circuit,
            theta,
            head,
            seed,
        })
    }

    pub fn from_parts(
        encoder: EncoderConfig,
        ansatz: AnsatzId,
        layers: usize,
        theta: Vec<f64>,
        head: DenseNet,
        seed: u64,
    ) -> Result<Self> {
        encoder.validate()?;
        let k = encoder.num_qubits();
        let circuit = build_ansatz(ansatz, k, layers)?;
        circuit.check_params(&theta)?;
        if head.input_dim() != k || head.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: head.input_dim(),
            });
        }
        Ok(Self {
            encoder,
            ansatz,
            layers,
            circuit,
            theta,
            head,
            seed,
        })
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn ansatz(&self) -> AnsatzId {
        self.ansatz
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn head(&self) -> &DenseNet {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DenseNet {
        &mut self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_qubits(&self) -> usize {
        self.circuit.num_qubits()
    }

    /// Circuit angles followed by head parameters.
    pub fn total_params(&self) -> usize {
        self.theta.len() + self.head.total_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        p.extend(self.head.params());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.total_params() {
            return Err(Error::DimensionMismatch {
                expected: self.total_params(),
                got: params.len(),
            });
        }
        let (theta, head) = params.split_at(self.theta.len());
        self.head.set_params(head)?;
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn bound_circuit(&self) -> Result<BoundCircuit> {
        self.circuit.bind(&self.theta)
    }

    pub fn encode(&self, features: &[f64]) -> Result<StateVector> {
        self.encoder.encode(features)
    }

    pub fn expectations(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut state = self.encode(features)?;
        self.bound_circuit()?.run(&mut state)?;
        Ok(state.expectations_z())
    }

    /// The encoded state is prepared ideally; `channel` follows every PQC gate.
    pub fn noisy_expectations(&self, features: &[f64], channel: &KrausChannel) -> Result<Vec<f64>> {
        let rho = self.encode(features)?.to_density_matrix();
        let rho = noisy_execute(&self.bound_circuit()?, rho, channel)?;
        Ok(rho.expectations_z())
    }

    pub fn head_output(&self, expectations: &[f64]) -> Result<f64> {
        Ok(self.head.forward(expectations)?[0])
    }

    pub fn forward(&self, features: &[f64]) -> Result<QnnOutput> {
        let expectations = self.expectations(features)?;
        let prediction = self.head_output(&expectations)?;
        Ok(QnnOutput {
            expectations,
            prediction,
        })
    }

    pub fn forward_noisy(&self, features: &[f64], channel: &KrausChannel) -> Result<QnnOutput> {
        let expectations = self.noisy_expectations(features, channel)?;
        let prediction = self.head_output(&expectations)?;
        Ok(QnnOutput {
            expectations,
            prediction,
        })
    }

    /// Mean squared error over `batch` and its gradient.
    pub fn gradient(&self, batch: &[(&[f64], f64)]) -> Result<QnnGradient> {
        let (loss, mut grad) = batch_gradient(self, batch)?;
        let head = grad.split_off(self.theta.len());
        Ok(QnnGradient {
            loss,
            theta: grad,
            head,
        })
    }

    /// Gradient of `upstream · <Z>` with respect to θ.
    pub fn theta_vjp(&self, features: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let bound = self.bound_circuit()?;
        Ok(shifted_vjp(&self.circuit, &bound, &self.theta, self.encode(features)?, upstream)?.1)
    }

    /// As [`Self::theta_vjp`] for the noisy expectations.
    pub fn noisy_theta_vjp(
        &self,
        features: &[f64],
        channel: &KrausChannel,
        upstream: &[f64],
    ) -> Result<Vec<f64>> {
        let bound = self.bound_circuit()?;
        let state = NoisyState {
            rho: self.encode(features)?.to_density_matrix(),
            channel,
        };
        Ok(shifted_vjp(&self.circuit, &bound, &self.theta, state, upstream)?.1)
    }

    pub fn to_checkpoint(&self, scaler: Option<LabelScaler>) -> QnnCheckpoint {
        QnnCheckpoint {
            encoder: self.encoder,
            ansatz: self.ansatz,
            layers: self.layers,
            theta: self.theta.clone(),
            head: self.head.clone(),
            seed: self.seed,
            scaler,
        }
    }

    pub fn from_checkpoint(ckpt: QnnCheckpoint) -> Result<(Self, Option<LabelScaler>)> {
        let model = Self::from_parts(
            ckpt.encoder,
            ckpt.ansatz,
            ckpt.layers,
            ckpt.theta,
            ckpt.head,
            ckpt.seed,
        )?;
        Ok((model, ckpt.scaler))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QnnGradient {
    pub loss: f64,
    pub theta: Vec<f64>,
    pub head: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QnnCheckpoint {
    pub encoder: EncoderConfig,
    pub ansatz: AnsatzId,
    pub layers: usize,
    pub theta: Vec<f64>,
    pub head: DenseNet,
    pub seed: u64,
    #[serde(default)]
    pub scaler: Option<LabelScaler>,
}

/// Residual-weighted head backward shared by the regressors below:
/// returns `(squared error, head grads, dL/d head input)`.
fn head_backward(head: &DenseNet, x: &[f64], label: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let r = head.forward(x)?[0] - label;
    let g = head.backward(x, &[2.0 * r])?;
    Ok((r * r, g.params, g.input))
}

impl Regressor for QnnModel {
    fn params(&self) -> Vec<f64> {
        QnnModel::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        QnnModel::set_params(self, params)
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.forward(features)?.prediction)
    }

    fn sample_gradient(&self, features: &[f64], label: f64) -> Result<(f64, Vec<f64>)> {
        let e = self.expectations(features)?;
        let (loss, head_grad, upstream) = head_backward(&self.head, &e, label)?;
        let mut grad = if upstream.iter().all(|&u| u == 0.0) {
            vec![0.0; self.theta.len()]
        } else {
            self.theta_vjp(features, &upstream)?
        };
        grad.extend(head_grad);
        Ok((loss, grad))
    }

    fn set_output_bias(&mut self, bias: f64) {
        self.head.output_layer_mut().bias_mut()[0] = bias;
    }

    fn num_params(&self) -> usize {
        self.total_params()
    }
}

/// A QNN executed under gate noise, optionally followed by a frozen DREM
/// layer in front of the head. Only the QNN's own parameters train.
#[derive(Clone, Debug)]
pub struct NoisyQnn {
    pub model: QnnModel,
    pub channel: KrausChannel,
    drem: Option<DremLayer>,
}

impl NoisyQnn {
    pub fn new(model: QnnModel, channel: KrausChannel, drem: Option<DremLayer>) -> Result<Self> {
        if let Some(d) = &drem {
            if !d.is_frozen() {
                return Err(Error::NotFrozen);
            }
            if d.dim() != model.num_qubits() {
                return Err(Error::DimensionMismatch {
                    expected: model.num_qubits(),
                    got: d.dim(),
                });
            }
        }
        Ok(Self {
            model,
            channel,
            drem,
        })
    }

    pub fn drem(&self) -> Option<&DremLayer> {
        self.drem.as_ref()
    }

    /// Noisy expectations, corrected by the DREM layer when present.
    pub fn expectations(&self, features: &[f64]) -> Result<Vec<f64>> {
        let e = self.model.noisy_expectations(features, &self.channel)?;
        match &self.drem {
            Some(d) => d.apply(&e),
            None => Ok(e),
        }
    }
}

impl Regressor for NoisyQnn {
    fn params(&self) -> Vec<f64> {
        self.model.params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.model.set_params(params)
    }

    fn predict(&self, features: &[f64]) -> Result<f64> {
        self.model.head_output(&self.expectations(features)?)
    }

    fn sample_gradient(&self, features: &[f64], label: f64) -> Result<(f64, Vec<f64>)> {
        let noisy = self.model.noisy_expectations(features, &self.channel)?;
        let corrected = match &self.drem {
            Some(d) => d.apply(&noisy)?,
            None => noisy.clone(),
        };
        let (loss, head_grad, mut upstream) = head_backward(self.model.head(), &corrected, label)?;
        if let Some(d) = &self.drem {
            upstream = d.input_gradient(&noisy, &upstream)?;
        }
        let mut grad = if upstream.iter().all(|&u| u == 0.0) {
            vec![0.0; self.model.theta().len()]
        } else {
            self.model.noisy_theta_vjp(features, &self.channel, &upstream)?
        };
        grad.extend(head_grad);
        Ok((loss, grad))
    }

    fn set_output_bias(&mut self, bias: f64) {
        self.model.set_output_bias(bias);
    }

    fn num_params(&self) -> usize {
        self.model.total_params()
    }
}

/// Noiseless expectations for many feature vectors, in input order.
pub fn batch_expectations(model: &QnnModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| model.expectations(x)).collect()
}
