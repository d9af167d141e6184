//! Small dense feed-forward networks with exact reverse-mode gradients.
//!
//! Flattened parameter order, used by `params`, `set_params` and every
//! gradient: layer by layer, row-major weights (`out x in`) then bias.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                got: bias.len(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Weights and biases uniform in `±sqrt(1 / in_dim)`.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let weights = draw(in_dim * out_dim);
        let bias = draw(out_dim);
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Parameter gradient (flattened) and gradient with respect to the input.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradient {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                });
            }
        }
        Ok(Self { layers })
    }

    /// `dims = [in, h1, ..., out]` with one activation per layer.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: dims.len().saturating_sub(1),
                got: activations.len(),
            });
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &a)| Dense::init(d[0], d[1], a, rng))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.total_params() {
            return Err(Error::DimensionMismatch {
                expected: self.total_params(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    /// `true` at flattened positions that hold weights (not biases).
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.total_params());
        for l in &self.layers {
            out.extend(std::iter::repeat_n(true, l.weights.len()));
            out.extend(std::iter::repeat_n(false, l.bias.len()));
        }
        out
    }

    /// Sum of squared weights, biases excluded.
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum()
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        let last = self.layers.len() - 1;
        &mut self.layers[last]
    }

    /// Hash of the exact parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.params() {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l
                .pre_activation(&a)
                .into_iter()
                .map(|z| l.activation.apply(z))
                .collect();
        }
        Ok(a)
    }

    /// Reverse-mode gradient of `upstream · net(x)`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<NetGradient> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        // inputs[l] feeds layer l; pre[l] is its pre-activation
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for l in &self.layers {
            let z = l.pre_activation(&a);
            let next = z.iter().map(|&v| l.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }

        let mut grads = vec![0.0; self.total_params()];
        let mut offset = grads.len();
        let mut delta = upstream.to_vec();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            for (d, z) in delta.iter_mut().zip(&pre[idx]) {
                *d *= l.activation.derivative(*z);
            }
            offset -= l.num_params();
            let (gw, gb) = grads[offset..offset + l.num_params()].split_at_mut(l.weights.len());
            let input = &inputs[idx];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] = d;
                if d != 0.0 {
                    for (g, v) in gw[o * l.in_dim..(o + 1) * l.in_dim].iter_mut().zip(input) {
                        *g = d * v;
                    }
                }
            }
            let mut prev = vec![0.0; l.in_dim];
            for (row, &d) in l.weights.chunks_exact(l.in_dim).zip(&delta) {
                if d != 0.0 {
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                }
            }
            delta = prev;
        }
        Ok(NetGradient {
            params: grads,
            input: delta,
        })
    }
}

/// Number of leading fusion features produced by the 3D-CNN branch.
pub const CNN3D_FEATURES: usize = 10;
/// Number of trailing fusion features produced by the SG-CNN branch.
pub const SGCNN_FEATURES: usize = 6;

/// The classical fusion head: one dense branch per front-end (10 -> 10 and
/// 6 -> 5, ReLU), concatenation, then 15 -> 15 (ReLU) -> 1. 401 parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalFusion {
    cnn3d: DenseNet,
    sgcnn: DenseNet,
    trunk: DenseNet,
}

impl ClassicalFusion {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        use Activation::{Identity, Relu};
        let cnn3d = DenseNet::init(&[CNN3D_FEATURES, 10], &[Relu], rng).expect("static dims");
        let sgcnn = DenseNet::init(&[SGCNN_FEATURES, 5], &[Relu], rng).expect("static dims");
        let trunk = DenseNet::init(&[15, 15, 1], &[Relu, Identity], rng).expect("static dims");
        Self {
            cnn3d,
            sgcnn,
            trunk,
        }
    }

    pub fn total_params(&self) -> usize {
        self.cnn3d.total_params() + self.sgcnn.total_params() + self.trunk.total_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.cnn3d.params();
        p.extend(self.sgcnn.params());
        p.extend(self.trunk.params());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.total_params() {
            return Err(Error::DimensionMismatch {
                expected: self.total_params(),
                got: params.len(),
            });
        }
        let (a, rest) = params.split_at(self.cnn3d.total_params());
        let (b, c) = rest.split_at(self.sgcnn.total_params());
        self.cnn3d.set_params(a)?;
        self.sgcnn.set_params(b)?;
        self.trunk.set_params(c)
    }

    pub fn trunk_mut(&mut self) -> &mut DenseNet {
        &mut self.trunk
    }

    fn split<'a>(&self, features: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        let expected = CNN3D_FEATURES + SGCNN_FEATURES;
        if features.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: features.len(),
            });
        }
        Ok(features.split_at(CNN3D_FEATURES))
    }

    fn hidden(&self, features: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = self.split(features)?;
        let mut h = self.cnn3d.forward(a)?;
        h.extend(self.sgcnn.forward(b)?);
        Ok(h)
    }

    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        Ok(self.trunk.forward(&self.hidden(features)?)?[0])
    }

    /// Gradient of `upstream * forward(features)` in `params()` order.
    pub fn backward(&self, features: &[f64], upstream: f64) -> Result<Vec<f64>> {
        let (a, b) = self.split(features)?;
        let hidden = self.hidden(features)?;
        let trunk = self.trunk.backward(&hidden, &[upstream])?;
        let (da, db) = trunk.input.split_at(self.cnn3d.output_dim());
        let mut grads = self.cnn3d.backward(a, da)?.params;
        grads.extend(self.sgcnn.backward(b, db)?.params);
        grads.extend(trunk.params);
        Ok(grads)
    }
}
