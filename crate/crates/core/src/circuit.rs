//! Parameterized circuits, the six ansatz layouts, and global folding.
//!
//! Text format (one item per line, `#` starts a comment):
//!
//! ```text
//! circuit qubits=4 params=12
//! ROT3 q=0 p=0,1,2
//! CNOT q=0,1
//! RX q=2 p=5 inv
//! ```
//!
//! `q=` lists targets (control first for controlled gates), `p=` lists
//! parameter slots and `inv` marks an adjoint gate whose bound angles are
//! negated (produced by folding).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{check_targets, DensityMatrix, GateMatrix, StateVector};

pub const MIN_LAYERS: usize = 1;
pub const MAX_LAYERS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Rx,
    Ry,
    Rz,
    /// `RZ(omega) RY(theta) RZ(phi)`, slots ordered `(phi, theta, omega)`.
    Rot,
    Cnot,
    Cz,
    Crx,
    Crz,
}

/// How the derivative of an expectation with respect to one gate angle is
/// recovered from shifted evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftRule {
    /// Generator with eigenvalues `±1/2`: `(f(+π/2) - f(-π/2)) / 2`.
    TwoTerm,
    /// Generator with eigenvalues `{0, ±1/2}` (controlled rotations).
    FourTerm,
}

impl ShiftRule {
    /// `(shift, coefficient)` pairs such that `f' = Σ coefficient · f(θ + shift)`.
    pub fn terms(self) -> Vec<(f64, f64)> {
        use std::f64::consts::{FRAC_PI_2, SQRT_2};
        match self {
            ShiftRule::TwoTerm => vec![(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)],
            ShiftRule::FourTerm => {
                let plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
                let minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
                vec![
                    (FRAC_PI_2, plus),
                    (-FRAC_PI_2, -plus),
                    (3.0 * FRAC_PI_2, -minus),
                    (-3.0 * FRAC_PI_2, minus),
                ]
            }
        }
    }
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::H,
        GateKind::X,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Rot,
        GateKind::Cnot,
        GateKind::Cz,
        GateKind::Crx,
        GateKind::Crz,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz | GateKind::Crx | GateKind::Crz => 2,
            _ => 1,
        }
    }

    pub fn num_params(self) -> usize {
        match self {
            GateKind::H | GateKind::X | GateKind::Cnot | GateKind::Cz => 0,
            GateKind::Rot => 3,
            _ => 1,
        }
    }

    pub fn shift_rule(self) -> Option<ShiftRule> {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Rot => Some(ShiftRule::TwoTerm),
            GateKind::Crx | GateKind::Crz => Some(ShiftRule::FourTerm),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Rot => "ROT3",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Crx => "CRX",
            GateKind::Crz => "CRZ",
        }
    }

    /// Matrix for concrete angles; `angles.len()` must equal `num_params()`.
    pub fn matrix(self, angles: &[f64]) -> GateMatrix {
        match self {
            GateKind::H => GateMatrix::h(),
            GateKind::X => GateMatrix::x(),
            GateKind::Rx => GateMatrix::rx(angles[0]),
            GateKind::Ry => GateMatrix::ry(angles[0]),
            GateKind::Rz => GateMatrix::rz(angles[0]),
            GateKind::Rot => GateMatrix::rot(angles[0], angles[1], angles[2]),
            GateKind::Cnot => GateMatrix::cnot(),
            GateKind::Cz => GateMatrix::cz(),
            GateKind::Crx => GateMatrix::crx(angles[0]),
            GateKind::Crz => GateMatrix::crz(angles[0]),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidCircuit(format!("unknown gate kind `{s}`")))
    }
}

/// One gate with symbolic parameter slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub slots: Vec<usize>,
    /// Adjoint flag: the gate is bound with negated angles.
    #[serde(default)]
    pub inverted: bool,
}

impl GateSpec {
    pub fn fixed(kind: GateKind, targets: &[usize]) -> Self {
        Self {
            kind,
            targets: targets.to_vec(),
            slots: Vec::new(),
            inverted: false,
        }
    }

    pub fn parametric(kind: GateKind, targets: &[usize], slots: &[usize]) -> Self {
        Self {
            kind,
            targets: targets.to_vec(),
            slots: slots.to_vec(),
            inverted: false,
        }
    }

    /// The exact inverse gate.
    ///
    /// Fixed gates in the library are self-inverse. Single-generator
    /// rotations invert by angle negation; `ROT3(φ,θ,ω)^† = ROT3(-ω,-θ,-φ)`,
    /// so the slot order is reversed as well.
    pub fn inverse(&self) -> Self {
        if self.slots.is_empty() {
            return self.clone();
        }
        let mut slots = self.slots.clone();
        if self.kind == GateKind::Rot {
            slots.reverse();
        }
        Self {
            kind: self.kind,
            targets: self.targets.clone(),
            slots,
            inverted: !self.inverted,
        }
    }

    pub fn angles(&self, params: &[f64]) -> Vec<f64> {
        let sign = if self.inverted { -1.0 } else { 1.0 };
        self.slots.iter().map(|&s| sign * params[s]).collect()
    }

    pub fn bind(&self, params: &[f64]) -> GateMatrix {
        self.kind.matrix(&self.angles(params))
    }

    /// Binds with the `angle`-th bound angle moved by `shift`.
    pub fn bind_shifted(&self, params: &[f64], angle: usize, shift: f64) -> GateMatrix {
        let mut angles = self.angles(params);
        angles[angle] += shift;
        self.kind.matrix(&angles)
    }

    /// `d(bound angle) / d(slot value)`.
    pub fn angle_sign(&self) -> f64 {
        if self.inverted {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "{} q={}", self.kind, join(&self.targets))?;
        if !self.slots.is_empty() {
            write!(f, " p={}", join(&self.slots))?;
        }
        if self.inverted {
            f.write_str(" inv")?;
        }
        Ok(())
    }
}

/// Ordered gate list over a parameter vector of length `num_params`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<GateSpec>,
    num_params: usize,
}

impl Circuit {
    /// Validates gate arities, targets and slot coverage.
    pub fn new(num_qubits: usize, gates: Vec<GateSpec>, num_params: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > crate::sim::MAX_QUBITS {
            return Err(Error::QubitCount(num_qubits));
        }
        let mut referenced = vec![false; num_params];
        for (i, g) in gates.iter().enumerate() {
            check_targets(num_qubits, g.kind.arity(), &g.targets)
                .map_err(|e| Error::InvalidCircuit(format!("gate {i} ({g}): {e}")))?;
            if g.slots.len() != g.kind.num_params() {
                return Err(Error::InvalidCircuit(format!(
                    "gate {i} ({g}): {} takes {} parameter(s)",
                    g.kind,
                    g.kind.num_params()
                )));
            }
            for &s in &g.slots {
                if s >= num_params {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {i} ({g}): slot {s} >= num_params {num_params}"
                    )));
                }
                referenced[s] = true;
            }
        }
        if let Some(s) = referenced.iter().position(|r| !r) {
            return Err(Error::InvalidCircuit(format!("slot {s} is never used")));
        }
        Ok(Self {
            num_qubits,
            gates,
            num_params,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn two_qubit_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.arity() == 2).count()
    }

    pub fn parametric_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| !g.slots.is_empty()).count()
    }

    pub fn bind(&self, params: &[f64]) -> Result<BoundCircuit> {
        self.check_params(params)?;
        Ok(BoundCircuit {
            num_qubits: self.num_qubits,
            gates: self
                .gates
                .iter()
                .map(|g| BoundGate {
                    matrix: g.bind(params),
                    targets: g.targets.clone(),
                })
                .collect(),
        })
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::DimensionMismatch {
                expected: self.num_params,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Adjoint circuit over the same parameter vector.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            gates: self.gates.iter().rev().map(GateSpec::inverse).collect(),
            num_params: self.num_params,
        }
    }

    /// `U (U^† U)^((s-1)/2)` for odd `scale_factor >= 1`.
    pub fn fold_global(&self, scale_factor: usize) -> Result<Circuit> {
        if scale_factor.is_multiple_of(2) {
            return Err(Error::InvalidScaleFactor(scale_factor as i64));
        }
        let inverse = self.inverse();
        let mut gates = Vec::with_capacity(self.gates.len() * scale_factor);
        gates.extend_from_slice(&self.gates);
        for _ in 0..(scale_factor - 1) / 2 {
            gates.extend_from_slice(&inverse.gates);
            gates.extend_from_slice(&self.gates);
        }
        Ok(Circuit {
            num_qubits: self.num_qubits,
            gates,
            num_params: self.num_params,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "circuit qubits={} params={}\n",
            self.num_qubits, self.num_params
        );
        for g in &self.gates {
            out.push_str(&g.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut header: Option<(usize, usize)> = None;
        let mut gates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let head = fields.next().unwrap_or_default();
            if header.is_none() {
                if head != "circuit" {
                    return Err(err("expected `circuit qubits=N params=P` header".into()));
                }
                let (mut q, mut p) = (None, None);
                for f in fields {
                    match f.split_once('=') {
                        Some(("qubits", v)) => q = v.parse().ok(),
                        Some(("params", v)) => p = v.parse().ok(),
                        _ => return Err(err(format!("unexpected header field `{f}`"))),
                    }
                }
                match (q, p) {
                    (Some(q), Some(p)) => header = Some((q, p)),
                    _ => return Err(err("header needs qubits= and params=".into())),
                }
                continue;
            }
            let kind: GateKind = head.parse().map_err(|e: Error| err(e.to_string()))?;
            let mut spec = GateSpec::fixed(kind, &[]);
            for f in fields {
                let list = |v: &str| -> Result<Vec<usize>> {
                    v.split(',')
                        .map(|x| {
                            x.parse()
                                .map_err(|_| err(format!("bad index `{x}`")))
                        })
                        .collect()
                };
                match f.split_once('=') {
                    Some(("q", v)) => spec.targets = list(v)?,
                    Some(("p", v)) => spec.slots = list(v)?,
                    None if f == "inv" => spec.inverted = true,
                    _ => return Err(err(format!("unexpected field `{f}`"))),
                }
            }
            gates.push(spec);
        }
        let (q, p) = header.ok_or(Error::Empty("circuit text"))?;
        Circuit::new(q, gates, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundGate {
    pub matrix: GateMatrix,
    pub targets: Vec<usize>,
}

/// A circuit with every parameter resolved to a concrete matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCircuit {
    num_qubits: usize,
    gates: Vec<BoundGate>,
}

impl BoundCircuit {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[BoundGate] {
        &self.gates
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn run(&self, state: &mut StateVector) -> Result<()> {
        self.check_width(state.num_qubits())?;
        for g in &self.gates {
            state.apply_unchecked(&g.matrix, &g.targets);
        }
        Ok(())
    }

    pub fn run_dm(&self, rho: &mut DensityMatrix) -> Result<()> {
        self.check_width(rho.num_qubits())?;
        for g in &self.gates {
            rho.apply_unchecked(&g.matrix, &g.targets);
        }
        Ok(())
    }

    pub(crate) fn check_width(&self, n: usize) -> Result<()> {
        if n != self.num_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits,
                got: n,
            });
        }
        Ok(())
    }
}

/// One of the six ansatz layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct AnsatzId(u8);

impl AnsatzId {
    pub const ALL: [AnsatzId; 6] = [
        AnsatzId(1),
        AnsatzId(2),
        AnsatzId(3),
        AnsatzId(4),
        AnsatzId(5),
        AnsatzId(6),
    ];

    pub fn new(id: i64) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(AnsatzId(id as u8))
        } else {
            Err(Error::InvalidAnsatz(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Trainable circuit parameters per layer on `n` qubits.
    pub fn params_per_layer(self, n: usize) -> usize {
        match self.0 {
            1 => 3 * n,
            2 | 3 => n,
            4 | 5 => 4 * n,
            _ => 4 * n + n * (n - 1),
        }
    }
}

impl TryFrom<i64> for AnsatzId {
    type Error = Error;

    fn try_from(id: i64) -> Result<Self> {
        AnsatzId::new(id)
    }
}

impl From<AnsatzId> for u8 {
    fn from(id: AnsatzId) -> u8 {
        id.0
    }
}

impl fmt::Display for AnsatzId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

struct LayerBuilder {
    gates: Vec<GateSpec>,
    next_slot: usize,
}

impl LayerBuilder {
    fn fixed(&mut self, kind: GateKind, targets: &[usize]) {
        self.gates.push(GateSpec::fixed(kind, targets));
    }

    fn param(&mut self, kind: GateKind, targets: &[usize]) {
        let slots: Vec<usize> = (self.next_slot..self.next_slot + kind.num_params()).collect();
        self.next_slot += slots.len();
        self.gates.push(GateSpec::parametric(kind, targets, &slots));
    }

    fn rotation_layer(&mut self, kind: GateKind, n: usize) {
        for q in 0..n {
            self.param(kind, &[q]);
        }
    }
}

/// Builds `layers` repetitions of ansatz `id` on `num_qubits` qubits.
///
/// Per layer, on `n` qubits:
/// 1. `ROT3` on every qubit, then a CNOT ring `i -> (i + r) mod n` with range
///    `r = (layer mod (n-1)) + 1` (strongly entangling layout).
/// 2. `H` on every qubit, `CZ` on every unordered pair, `RX` on every qubit.
/// 3. `RY` on every qubit, then a CNOT ring `i -> i+1 mod n`.
/// 4. `RY` layer, CRX ring `i -> i+1`, `RY` layer, CRX ring `i+1 -> i`.
/// 5. As 4 with CRZ in place of CRX.
/// 6. `RX`+`RZ` layers, CRX from every qubit to every other qubit, `RX`+`RZ` layers.
pub fn build_ansatz(id: AnsatzId, num_qubits: usize, layers: usize) -> Result<Circuit> {
    if num_qubits < 2 {
        return Err(Error::TooFewQubits(num_qubits));
    }
    if !(MIN_LAYERS..=MAX_LAYERS).contains(&layers) {
        return Err(Error::InvalidLayers(layers));
    }
    let n = num_qubits;
    let mut b = LayerBuilder {
        gates: Vec::new(),
        next_slot: 0,
    };
    for layer in 0..layers {
        match id.0 {
            1 => {
                b.rotation_layer(GateKind::Rot, n);
                let r = layer % (n - 1) + 1;
                for q in 0..n {
                    b.fixed(GateKind::Cnot, &[q, (q + r) % n]);
                }
            }
            2 => {
                for q in 0..n {
                    b.fixed(GateKind::H, &[q]);
                }
                for a in 0..n {
                    for c in a + 1..n {
                        b.fixed(GateKind::Cz, &[a, c]);
                    }
                }
                b.rotation_layer(GateKind::Rx, n);
            }
            3 => {
                b.rotation_layer(GateKind::Ry, n);
                for q in 0..n {
                    b.fixed(GateKind::Cnot, &[q, (q + 1) % n]);
                }
            }
            4 | 5 => {
                let controlled = if id.0 == 4 { GateKind::Crx } else { GateKind::Crz };
                b.rotation_layer(GateKind::Ry, n);
                for q in 0..n {
                    b.param(controlled, &[q, (q + 1) % n]);
                }
                b.rotation_layer(GateKind::Ry, n);
                for q in 0..n {
                    b.param(controlled, &[(q + 1) % n, q]);
                }
            }
            _ => {
                b.rotation_layer(GateKind::Rx, n);
                b.rotation_layer(GateKind::Rz, n);
                for ctrl in 0..n {
                    for tgt in (0..n).filter(|&t| t != ctrl) {
                        b.param(GateKind::Crx, &[ctrl, tgt]);
                    }
                }
                b.rotation_layer(GateKind::Rx, n);
                b.rotation_layer(GateKind::Rz, n);
            }
        }
    }
    let num_params = b.next_slot;
    Circuit::new(n, b.gates, num_params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
    }

    #[test]
    fn per_layer_parameter_counts_on_four_qubits() {
        let expected = [12, 4, 4, 16, 16, 28];
        for (id, per_layer) in AnsatzId::ALL.into_iter().zip(expected) {
            for layers in [1, 2, 10, 14] {
                let c = build_ansatz(id, 4, layers).unwrap();
                assert_eq!(c.num_params(), per_layer * layers, "circuit {id}");
                assert_eq!(id.params_per_layer(4), per_layer);
            }
        }
    }

    #[test]
    fn table_counts_at_ten_layers() {
        let c1 = build_ansatz(AnsatzId::new(1).unwrap(), 4, 10).unwrap();
        let c3 = build_ansatz(AnsatzId::new(3).unwrap(), 4, 10).unwrap();
        let c6 = build_ansatz(AnsatzId::new(6).unwrap(), 4, 10).unwrap();
        assert_eq!(c1.num_params(), 120);
        assert_eq!(c3.num_params(), 40);
        assert_eq!(c6.num_params(), 280);
        assert_eq!(build_ansatz(AnsatzId::new(1).unwrap(), 4, 1).unwrap().num_params(), 12);
    }

    #[test]
    fn every_ansatz_entangles() {
        for id in AnsatzId::ALL {
            for n in 2..=5 {
                let c = build_ansatz(id, n, 1).unwrap();
                assert!(c.two_qubit_gate_count() > 0, "circuit {id} on {n} qubits");
            }
        }
    }

    #[test]
    fn builder_rejects_bad_input() {
        assert!(matches!(AnsatzId::new(7), Err(Error::InvalidAnsatz(7))));
        assert!(AnsatzId::new(0).is_err());
        let id = AnsatzId::new(1).unwrap();
        assert!(matches!(build_ansatz(id, 4, 0), Err(Error::InvalidLayers(0))));
        assert!(matches!(build_ansatz(id, 4, 15), Err(Error::InvalidLayers(15))));
        assert!(build_ansatz(id, 1, 2).is_err());
    }

    #[test]
    fn circuit_validation() {
        let bad_slot = vec![GateSpec::parametric(GateKind::Rx, &[0], &[1])];
        assert!(Circuit::new(1, bad_slot, 1).is_err());
        let unused = vec![GateSpec::parametric(GateKind::Rx, &[0], &[0])];
        assert!(Circuit::new(1, unused, 2).is_err());
        let wrong_arity = vec![GateSpec::parametric(GateKind::Rot, &[0], &[0])];
        assert!(Circuit::new(1, wrong_arity, 1).is_err());
        let out_of_range = vec![GateSpec::fixed(GateKind::Cnot, &[0, 2])];
        assert!(Circuit::new(2, out_of_range, 0).is_err());
    }

    #[test]
    fn zero_params_bind_to_identity_rotations() {
        let c = build_ansatz(AnsatzId::new(3).unwrap(), 4, 2).unwrap();
        let bound = c.bind(&vec![0.0; c.num_params()]).unwrap();
        let mut s = StateVector::zero(4).unwrap();
        bound.run(&mut s).unwrap();
        // CNOT rings leave |0000> fixed
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rz_pi_binds_to_phase_gate() {
        let c = Circuit::new(1, vec![GateSpec::parametric(GateKind::Rz, &[0], &[0])], 1).unwrap();
        let bound = c.bind(&[std::f64::consts::PI]).unwrap();
        let m = &bound.gates()[0].matrix;
        assert_abs_diff_eq!((m.entry(0, 0) - num_complex::Complex64::new(0.0, -1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((m.entry(1, 1) - num_complex::Complex64::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.entry(0, 1).norm() + m.entry(1, 0).norm(), 0.0);
    }

    #[test]
    fn bound_matrices_are_unitary() {
        for id in AnsatzId::ALL {
            let c = build_ansatz(id, 4, 2).unwrap();
            let bound = c.bind(&random_params(c.num_params(), 3)).unwrap();
            for g in bound.gates() {
                assert!(g.matrix.unitarity_error() < 1e-12);
            }
        }
        let c = build_ansatz(AnsatzId::new(1).unwrap(), 4, 1).unwrap();
        assert!(matches!(c.bind(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inverse_undoes_circuit() {
        for id in AnsatzId::ALL {
            let c = build_ansatz(id, 3, 2).unwrap();
            let params = random_params(c.num_params(), 11);
            let mut s = StateVector::zero(3).unwrap();
            c.bind(&params).unwrap().run(&mut s).unwrap();
            c.inverse().bind(&params).unwrap().run(&mut s).unwrap();
            assert_abs_diff_eq!(s.amplitudes()[0].norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn folding_counts_and_identity() {
        let c = build_ansatz(AnsatzId::new(1).unwrap(), 4, 3).unwrap();
        assert_eq!(c.fold_global(1).unwrap(), c);
        for s in [3, 5, 7] {
            assert_eq!(c.fold_global(s).unwrap().num_gates(), s * c.num_gates());
        }
        assert!(matches!(c.fold_global(2), Err(Error::InvalidScaleFactor(2))));
        assert!(c.fold_global(0).is_err());

        let params = random_params(c.num_params(), 5);
        let mut a = StateVector::zero(4).unwrap();
        let mut b = a.clone();
        c.bind(&params).unwrap().run(&mut a).unwrap();
        c.fold_global(3).unwrap().bind(&params).unwrap().run(&mut b).unwrap();
        for (x, y) in a.expectations_z().iter().zip(b.expectations_z()) {
            assert_abs_diff_eq!(x, &y, epsilon = 1e-9);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let c = build_ansatz(AnsatzId::new(4).unwrap(), 3, 1)
            .unwrap()
            .fold_global(3)
            .unwrap();
        let text = c.to_text();
        assert!(text.starts_with("circuit qubits=3 params=12\nRY q=0 p=0\n"));
        assert!(text.contains(" inv\n"));
        assert_eq!(Circuit::from_text(&text).unwrap(), c);
    }

    #[test]
    fn text_format_errors_carry_line_numbers() {
        let err = Circuit::from_text("circuit qubits=2 params=0\nCNOT q=0,1\nFOO q=1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(Circuit::from_text("RX q=0\n").is_err());
    }
}
