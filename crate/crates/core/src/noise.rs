//! Single-qubit Kraus channels and noisy circuit execution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::BoundCircuit;
use crate::error::{Error, Result};
use crate::sim::{identity2, pauli_x, pauli_y, pauli_z, DensityMatrix, Mat2, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    AmplitudeDamping,
    PhaseDamping,
    Depolarizing,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [
        ChannelKind::AmplitudeDamping,
        ChannelKind::PhaseDamping,
        ChannelKind::Depolarizing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::AmplitudeDamping => "amplitude-damping",
            ChannelKind::PhaseDamping => "phase-damping",
            ChannelKind::Depolarizing => "depolarizing",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown channel `{s}` (expected amplitude-damping, phase-damping or depolarizing)"
                ))
            })
    }
}

/// A single-qubit CPTP map in Kraus form.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    kind: ChannelKind,
    p: f64,
    operators: Vec<Mat2>,
}

fn scaled(m: Mat2, s: f64) -> Mat2 {
    m.map(|row| row.map(|e| e * s))
}

fn diag(a: f64, b: f64) -> Mat2 {
    [
        [C64::new(a, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(b, 0.0)],
    ]
}

impl KrausChannel {
    /// Amplitude damping: `K0 = diag(1, sqrt(1-p))`, `K1 = sqrt(p) |0><1|`.
    /// Phase damping: `K0 = diag(1, sqrt(1-p))`, `K1 = diag(0, sqrt(p))`.
    /// Depolarizing: `(1-p) rho + (p/3)(X rho X + Y rho Y + Z rho Z)`.
    pub fn new(kind: ChannelKind, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        let keep = (1.0 - p).sqrt();
        let operators = match kind {
            ChannelKind::AmplitudeDamping => {
                let mut k1 = diag(0.0, 0.0);
                k1[0][1] = C64::new(p.sqrt(), 0.0);
                vec![diag(1.0, keep), k1]
            }
            ChannelKind::PhaseDamping => vec![diag(1.0, keep), diag(0.0, p.sqrt())],
            ChannelKind::Depolarizing => {
                let s = (p / 3.0).sqrt();
                vec![
                    scaled(identity2(), keep),
                    scaled(pauli_x(), s),
                    scaled(pauli_y(), s),
                    scaled(pauli_z(), s),
                ]
            }
        };
        Ok(Self { kind, p, operators })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    /// Largest entry of `|sum K^dagger K - I|`.
    pub fn completeness_error(&self) -> f64 {
        let mut sum = [[C64::new(0.0, 0.0); 2]; 2];
        for k in &self.operators {
            for (r, row) in sum.iter_mut().enumerate() {
                for (c, e) in row.iter_mut().enumerate() {
                    *e += k[0][r].conj() * k[0][c] + k[1][r].conj() * k[1][c];
                }
            }
        }
        let id = identity2();
        sum.iter()
            .flatten()
            .zip(id.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, rho: &mut DensityMatrix, qubit: usize) -> Result<()> {
        rho.apply_kraus(&self.operators, qubit)
    }
}

/// Runs `circuit` on `rho`, applying `channel` to every qubit a gate touched
/// right after that gate.
pub fn noisy_execute(
    circuit: &BoundCircuit,
    mut rho: DensityMatrix,
    channel: &KrausChannel,
) -> Result<DensityMatrix> {
    circuit.check_width(rho.num_qubits())?;
    let noiseless = channel.p == 0.0;
    for g in circuit.gates() {
        rho.apply_unchecked(&g.matrix, &g.targets);
        if !noiseless {
            for &q in &g.targets {
                rho.apply_kraus(&channel.operators, q)?;
            }
        }
    }
    Ok(rho)
}
