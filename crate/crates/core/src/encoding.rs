//! Classical-to-quantum feature maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum EncodingScheme {
    /// Features in the amplitudes of `ceil(log2 n)` qubits.
    Amplitude,
    /// `blocks` independent amplitude encodings of `qubits_per_block` qubits each.
    Hae {
        blocks: usize,
        qubits_per_block: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub scheme: EncodingScheme,
    pub input_dim: usize,
}

impl EncoderConfig {
    pub fn amplitude(input_dim: usize) -> Result<Self> {
        let cfg = Self {
            scheme: EncodingScheme::Amplitude,
            input_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hae(input_dim: usize, blocks: usize, qubits_per_block: usize) -> Result<Self> {
        let cfg = Self {
            scheme: EncodingScheme::Hae {
                blocks,
                qubits_per_block,
            },
            input_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Empty("feature vector"));
        }
        if let EncodingScheme::Hae {
            blocks,
            qubits_per_block,
        } = self.scheme
        {
            if blocks == 0 || qubits_per_block == 0 {
                return Err(Error::InvalidConfig(
                    "HAE needs at least one block of at least one qubit".into(),
                ));
            }
            let block_len = self.input_dim.div_ceil(blocks);
            if block_len > 1 << qubits_per_block {
                return Err(Error::CapacityExceeded {
                    features: self.input_dim,
                    capacity: blocks << qubits_per_block,
                });
            }
        }
        if self.num_qubits() > crate::sim::MAX_QUBITS {
            return Err(Error::QubitCount(self.num_qubits()));
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        match self.scheme {
            EncodingScheme::Amplitude => amplitude_qubits(self.input_dim),
            EncodingScheme::Hae {
                blocks,
                qubits_per_block,
            } => blocks * qubits_per_block,
        }
    }

    pub fn encode(&self, features: &[f64]) -> Result<StateVector> {
        if features.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: features.len(),
            });
        }
        match self.scheme {
            EncodingScheme::Amplitude => amplitude_encode(features),
            EncodingScheme::Hae { .. } => hae_encode(features, self),
        }
    }
}

/// `max(1, ceil(log2 n))`.
pub fn amplitude_qubits(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros().max(1) as usize
}

fn encode_into(features: &[f64], num_qubits: usize) -> Result<StateVector> {
    let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut amps = vec![C64::new(0.0, 0.0); 1 << num_qubits];
    for (a, x) in amps.iter_mut().zip(features) {
        *a = C64::new(x / norm, 0.0);
    }
    StateVector::from_amplitudes(amps)
}

/// Normalized features as amplitudes; indices past `n` are zero.
pub fn amplitude_encode(features: &[f64]) -> Result<StateVector> {
    if features.is_empty() {
        return Err(Error::Empty("feature vector"));
    }
    encode_into(features, amplitude_qubits(features.len()))
}

/// Splits `features` into contiguous blocks of `ceil(n / b)` and amplitude
/// encodes each onto its own `m` qubits; block `i` occupies qubits
/// `i*m .. (i+1)*m`.
pub fn hae_encode(features: &[f64], config: &EncoderConfig) -> Result<StateVector> {
    let EncodingScheme::Hae {
        blocks,
        qubits_per_block,
    } = config.scheme
    else {
        return Err(Error::InvalidConfig("encoder is not HAE".into()));
    };
    let capacity = blocks << qubits_per_block;
    if features.len() > capacity {
        return Err(Error::CapacityExceeded {
            features: features.len(),
            capacity,
        });
    }
    let block_len = features.len().div_ceil(blocks).max(1);
    if block_len > 1 << qubits_per_block {
        return Err(Error::CapacityExceeded {
            features: features.len(),
            capacity,
        });
    }
    let mut state: Option<StateVector> = None;
    for b in 0..blocks {
        let lo = (b * block_len).min(features.len());
        let hi = ((b + 1) * block_len).min(features.len());
        let block = encode_into(&features[lo..hi], qubits_per_block).map_err(|e| match e {
            Error::ZeroNorm => Error::ZeroBlock(b),
            other => other,
        })?;
        state = Some(match state {
            None => block,
            Some(low) => low.tensor_high(&block)?,
        });
    }
    state.ok_or(Error::Empty("HAE blocks"))
}
