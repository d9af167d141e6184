//! Exact simulation kernels for pure states and density matrices.
//!
//! Qubit 0 is the least-significant bit of a basis-state index: the state
//! `|q_{n-1} ... q_1 q_0>` has index `sum_k q_k 2^k`. Multi-qubit gate
//! matrices follow the same rule locally, so for a gate applied to targets
//! `[a, b]` the local basis index is `bit(a) + 2 * bit(b)`.
//!
//! Density matrices are stored row-major. Viewing the `4^n` entries as a
//! vector over `2n` bits, the column index occupies bits `0..n` and the row
//! index bits `n..2n`. Left multiplication by `U` is then a gate on the high
//! bits and right multiplication by `U^dagger` is `conj(U)` on the low bits,
//! which lets both representations share the same strided kernels.

use std::cell::Cell;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

pub const MAX_QUBITS: usize = 12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

thread_local! {
    static GATES_EXECUTED: Cell<u64> = const { Cell::new(0) };
}

/// Number of gate applications performed on the calling thread so far.
///
/// Counts every unitary applied to a [`StateVector`] or [`DensityMatrix`].
pub fn gates_executed() -> u64 {
    GATES_EXECUTED.with(Cell::get)
}

fn count_gate() {
    GATES_EXECUTED.with(|c| c.set(c.get() + 1));
}

#[inline]
fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A one- or two-qubit unitary.
#[derive(Clone, Debug, PartialEq)]
pub enum GateMatrix {
    Single(Mat2),
    Double(Mat4),
}

impl GateMatrix {
    pub fn arity(&self) -> usize {
        match self {
            GateMatrix::Single(_) => 1,
            GateMatrix::Double(_) => 2,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.arity()
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        match self {
            GateMatrix::Single(m) => m[row][col],
            GateMatrix::Double(m) => m[row][col],
        }
    }

    pub fn dagger(&self) -> Self {
        match self {
            GateMatrix::Single(m) => GateMatrix::Single(dagger2(m)),
            GateMatrix::Double(m) => {
                let mut out = [[ZERO; 4]; 4];
                for (r, row) in out.iter_mut().enumerate() {
                    for (col, e) in row.iter_mut().enumerate() {
                        *e = m[col][r].conj();
                    }
                }
                GateMatrix::Double(out)
            }
        }
    }

    /// Largest entry of `|U^dagger U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for col in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.entry(k, r).conj() * self.entry(k, col);
                }
                if r == col {
                    acc -= ONE;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    pub fn h() -> Self {
        let s = c(FRAC_1_SQRT_2);
        GateMatrix::Single([[s, s], [s, -s]])
    }

    pub fn x() -> Self {
        GateMatrix::Single(pauli_x())
    }

    pub fn y() -> Self {
        GateMatrix::Single(pauli_y())
    }

    pub fn z() -> Self {
        GateMatrix::Single(pauli_z())
    }

    pub fn rx(theta: f64) -> Self {
        GateMatrix::Single(rx2(theta))
    }

    pub fn ry(theta: f64) -> Self {
        GateMatrix::Single(ry2(theta))
    }

    pub fn rz(theta: f64) -> Self {
        GateMatrix::Single(rz2(theta))
    }

    /// `RZ(omega) RY(theta) RZ(phi)`.
    pub fn rot(phi: f64, theta: f64, omega: f64) -> Self {
        GateMatrix::Single(mul2(&rz2(omega), &mul2(&ry2(theta), &rz2(phi))))
    }

    /// CNOT with the first target as control.
    pub fn cnot() -> Self {
        GateMatrix::Double(controlled(&pauli_x()))
    }

    pub fn cz() -> Self {
        GateMatrix::Double(controlled(&pauli_z()))
    }

    pub fn crx(theta: f64) -> Self {
        GateMatrix::Double(controlled(&rx2(theta)))
    }

    pub fn crz(theta: f64) -> Self {
        GateMatrix::Double(controlled(&rz2(theta)))
    }
}

pub fn identity2() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn pauli_x() -> Mat2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

pub fn pauli_y() -> Mat2 {
    [[ZERO, -I], [I, ZERO]]
}

pub fn pauli_z() -> Mat2 {
    [[ONE, ZERO], [ZERO, -ONE]]
}

fn rx2(t: f64) -> Mat2 {
    let (s, co) = (t / 2.0).sin_cos();
    [[c(co), C64::new(0.0, -s)], [C64::new(0.0, -s), c(co)]]
}

fn ry2(t: f64) -> Mat2 {
    let (s, co) = (t / 2.0).sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

fn rz2(t: f64) -> Mat2 {
    [
        [C64::from_polar(1.0, -t / 2.0), ZERO],
        [ZERO, C64::from_polar(1.0, t / 2.0)],
    ]
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (col, e) in row.iter_mut().enumerate() {
            *e = a[r][0] * b[0][col] + a[r][1] * b[1][col];
        }
    }
    out
}

pub fn dagger2(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

fn conj2(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[0][1].conj()], [m[1][0].conj(), m[1][1].conj()]]
}

fn conj4(m: &Mat4) -> Mat4 {
    let mut out = *m;
    out.iter_mut().flatten().for_each(|e| *e = e.conj());
    out
}

/// Controlled-`u` with the control on local bit 0 and the target on local bit 1.
fn controlled(u: &Mat2) -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[2][2] = ONE;
    // control set: local indices 1 (target 0) and 3 (target 1)
    m[1][1] = u[0][0];
    m[1][3] = u[0][1];
    m[3][1] = u[1][0];
    m[3][3] = u[1][1];
    m
}

// Strided kernels. `amps.len()` must be a power of two with more than `bit` bits.

pub(crate) fn apply_mat2(amps: &mut [C64], bit: usize, m: &Mat2) {
    let stride = 1usize << bit;
    let len = amps.len();
    let mut base = 0;
    while base < len {
        for i in base..base + stride {
            let a = amps[i];
            let b = amps[i + stride];
            amps[i] = m[0][0] * a + m[0][1] * b;
            amps[i + stride] = m[1][0] * a + m[1][1] * b;
        }
        base += stride << 1;
    }
}

pub(crate) fn apply_mat4(amps: &mut [C64], bit0: usize, bit1: usize, m: &Mat4) {
    let m0 = 1usize << bit0;
    let m1 = 1usize << bit1;
    let both = m0 | m1;
    for i in 0..amps.len() {
        if i & both != 0 {
            continue;
        }
        let idx = [i, i | m0, i | m1, i | both];
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (r, &target) in idx.iter().enumerate() {
            let row = &m[r];
            amps[target] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
}

fn check_qubit_count(n: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(())
    } else {
        Err(Error::QubitCount(n))
    }
}

pub(crate) fn check_targets(num_qubits: usize, arity: usize, targets: &[usize]) -> Result<()> {
    if targets.len() != arity {
        return Err(Error::ArityMismatch {
            arity,
            targets: targets.len(),
        });
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= num_qubits {
            return Err(Error::QubitOutOfRange {
                index: t,
                num_qubits,
            });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateTarget(t));
        }
    }
    Ok(())
}

fn check_qubit(num_qubits: usize, qubit: usize) -> Result<()> {
    if qubit < num_qubits {
        Ok(())
    } else {
        Err(Error::QubitOutOfRange {
            index: qubit,
            num_qubits,
        })
    }
}

/// Pure state of `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_qubit_count(num_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Computational basis state with the given index.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero(num_qubits)?;
        if index >= s.amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: s.amplitudes.len(),
                got: index,
            });
        }
        s.amplitudes[0] = ZERO;
        s.amplitudes[index] = ONE;
        Ok(s)
    }

    /// Wraps an amplitude vector; its length must be `2^n` and its norm 1 within 1e-8.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::NotPowerOfTwo(len));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_qubit_count(num_qubits)?;
        let s = Self {
            num_qubits,
            amplitudes,
        };
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies `gate` to `targets` in place.
    pub fn apply(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
        check_targets(self.num_qubits, gate.arity(), targets)?;
        self.apply_unchecked(gate, targets);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &GateMatrix, targets: &[usize]) {
        count_gate();
        match gate {
            GateMatrix::Single(m) => apply_mat2(&mut self.amplitudes, targets[0], m),
            GateMatrix::Double(m) => apply_mat4(&mut self.amplitudes, targets[0], targets[1], m),
        }
    }

    /// `<Z_qubit>`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(self.num_qubits, qubit)?;
        let mask = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// `<Z_k>` for every qubit `k`, in qubit order.
    pub fn expectations_z(&self) -> Vec<f64> {
        z_expectations(self.num_qubits, self.amplitudes.iter().map(|a| a.norm_sqr()))
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `high ⊗ self`: `self` occupies the low qubits of the result.
    pub fn tensor_high(&self, high: &StateVector) -> Result<StateVector> {
        let num_qubits = self.num_qubits + high.num_qubits;
        check_qubit_count(num_qubits)?;
        let low_len = self.amplitudes.len();
        let mut amplitudes = vec![ZERO; low_len * high.amplitudes.len()];
        for (h, &ah) in high.amplitudes.iter().enumerate() {
            for (l, &al) in self.amplitudes.iter().enumerate() {
                amplitudes[h * low_len + l] = ah * al;
            }
        }
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// Reduced state of a single qubit.
    pub fn reduced_qubit(&self, qubit: usize) -> Result<Mat2> {
        check_qubit(self.num_qubits, qubit)?;
        let mask = 1usize << qubit;
        let (mut p0, mut p1, mut off) = (0.0, 0.0, ZERO);
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i & mask == 0 {
                p0 += a.norm_sqr();
                off += *a * self.amplitudes[i | mask].conj();
            } else {
                p1 += a.norm_sqr();
            }
        }
        Ok([[c(p0), off], [off.conj(), c(p1)]])
    }

    pub fn to_density_matrix(&self) -> DensityMatrix {
        let dim = self.amplitudes.len();
        let mut elements = vec![ZERO; dim * dim];
        for (r, a) in self.amplitudes.iter().enumerate() {
            for (col, b) in self.amplitudes.iter().enumerate() {
                elements[r * dim + col] = *a * b.conj();
            }
        }
        DensityMatrix {
            num_qubits: self.num_qubits,
            elements,
        }
    }
}

fn z_expectations(num_qubits: usize, probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; num_qubits];
    for (i, p) in probs.enumerate() {
        for (k, e) in out.iter_mut().enumerate() {
            if i >> k & 1 == 0 {
                *e += p;
            } else {
                *e -= p;
            }
        }
    }
    out
}

/// Mixed state of `num_qubits` qubits, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    num_qubits: usize,
    elements: Vec<C64>,
}

impl DensityMatrix {
    pub fn zero_state(num_qubits: usize) -> Result<Self> {
        Ok(StateVector::zero(num_qubits)?.to_density_matrix())
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        check_qubit_count(num_qubits)?;
        let dim = 1usize << num_qubits;
        let mut elements = vec![ZERO; dim * dim];
        for i in 0..dim {
            elements[i * dim + i] = c(1.0 / dim as f64);
        }
        Ok(Self {
            num_qubits,
            elements,
        })
    }

    /// Row-major `2^n x 2^n` elements. No positivity check is made.
    pub fn from_elements(num_qubits: usize, elements: Vec<C64>) -> Result<Self> {
        check_qubit_count(num_qubits)?;
        let dim = 1usize << num_qubits;
        if elements.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: elements.len(),
            });
        }
        Ok(Self {
            num_qubits,
            elements,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn elements(&self) -> &[C64] {
        &self.elements
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.elements[row * self.dim() + col]
    }

    pub fn trace(&self) -> C64 {
        let dim = self.dim();
        (0..dim).map(|i| self.elements[i * dim + i]).sum()
    }

    /// `Tr(rho^2)`, using Hermiticity: `sum |rho_ij|^2`.
    pub fn purity(&self) -> f64 {
        self.elements.iter().map(|e| e.norm_sqr()).sum()
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..dim {
            for col in r..dim {
                worst = worst.max((self.get(r, col) - self.get(col, r).conj()).norm());
            }
        }
        worst
    }

    /// `rho -> U rho U^dagger` on `targets`.
    pub fn apply(&mut self, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
        check_targets(self.num_qubits, gate.arity(), targets)?;
        self.apply_unchecked(gate, targets);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&mut self, gate: &GateMatrix, targets: &[usize]) {
        count_gate();
        let n = self.num_qubits;
        match gate {
            GateMatrix::Single(m) => {
                apply_mat2(&mut self.elements, targets[0] + n, m);
                apply_mat2(&mut self.elements, targets[0], &conj2(m));
            }
            GateMatrix::Double(m) => {
                apply_mat4(&mut self.elements, targets[0] + n, targets[1] + n, m);
                apply_mat4(&mut self.elements, targets[0], targets[1], &conj4(m));
            }
        }
    }

    /// `rho -> sum_i K_i rho K_i^dagger` with the operators acting on `qubit`.
    pub fn apply_kraus(&mut self, operators: &[Mat2], qubit: usize) -> Result<()> {
        check_qubit(self.num_qubits, qubit)?;
        let n = self.num_qubits;
        let mut acc = vec![ZERO; self.elements.len()];
        let mut term = self.elements.clone();
        for (i, k) in operators.iter().enumerate() {
            if i > 0 {
                term.copy_from_slice(&self.elements);
            }
            apply_mat2(&mut term, qubit + n, k);
            apply_mat2(&mut term, qubit, &conj2(k));
            acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
        }
        self.elements = acc;
        Ok(())
    }

    /// `Tr(Z_qubit rho)`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(self.num_qubits, qubit)?;
        let dim = self.dim();
        let mask = 1usize << qubit;
        Ok((0..dim)
            .map(|i| {
                let p = self.elements[i * dim + i].re;
                if i & mask == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum())
    }

    pub fn expectations_z(&self) -> Vec<f64> {
        let dim = self.dim();
        z_expectations(
            self.num_qubits,
            (0..dim).map(|i| self.elements[i * dim + i].re),
        )
    }

    /// Reduced state of a single qubit (partial trace over the rest).
    pub fn reduced_qubit(&self, qubit: usize) -> Result<Mat2> {
        check_qubit(self.num_qubits, qubit)?;
        let dim = self.dim();
        let mask = 1usize << qubit;
        let mut out = [[ZERO; 2]; 2];
        for rest in (0..dim).filter(|i| i & mask == 0) {
            for (a, row) in out.iter_mut().enumerate() {
                for (b, e) in row.iter_mut().enumerate() {
                    let r = rest | if a == 1 { mask } else { 0 };
                    let col = rest | if b == 1 { mask } else { 0 };
                    *e += self.elements[r * dim + col];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn library() -> Vec<GateMatrix> {
        let mut gates = vec![
            GateMatrix::h(),
            GateMatrix::x(),
            GateMatrix::y(),
            GateMatrix::z(),
            GateMatrix::cnot(),
            GateMatrix::cz(),
        ];
        for &t in &[0.0, 0.3, -1.7, std::f64::consts::PI, 5.9] {
            gates.push(GateMatrix::rx(t));
            gates.push(GateMatrix::ry(t));
            gates.push(GateMatrix::rz(t));
            gates.push(GateMatrix::rot(t, 0.5 * t + 0.1, -t));
            gates.push(GateMatrix::crx(t));
            gates.push(GateMatrix::crz(t));
        }
        gates
    }

    #[test]
    fn gate_library_is_unitary() {
        for g in library() {
            assert!(g.unitarity_error() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn x_flips_qubit_zero() {
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateMatrix::x(), &[0]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&GateMatrix::h(), &[0]).unwrap();
        for a in s.amplitudes() {
            assert_abs_diff_eq!(a.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(s.expectation_z(0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cnot_makes_bell_state() {
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateMatrix::h(), &[0]).unwrap();
        s.apply(&GateMatrix::cnot(), &[0, 1]).unwrap();
        let a = s.amplitudes();
        assert_abs_diff_eq!(a[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[3].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].norm() + a[2].norm(), 0.0);
    }

    #[test]
    fn cnot_control_is_first_target() {
        // control qubit 1 set, target qubit 0
        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply(&GateMatrix::cnot(), &[1, 0]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0b11].re, 1.0);
        let mut s = StateVector::basis(2, 0b01).unwrap();
        s.apply(&GateMatrix::cnot(), &[1, 0]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0b01].re, 1.0);
    }

    #[test]
    fn target_validation() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            s.apply(&GateMatrix::x(), &[2]),
            Err(Error::QubitOutOfRange { .. })
        ));
        assert!(matches!(
            s.apply(&GateMatrix::cnot(), &[0]),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(matches!(
            s.apply(&GateMatrix::cnot(), &[1, 1]),
            Err(Error::DuplicateTarget(1))
        ));
        let mut rho = DensityMatrix::zero_state(2).unwrap();
        assert!(rho.apply(&GateMatrix::x(), &[5]).is_err());
        assert!(s.expectation_z(3).is_err());
        assert!(StateVector::zero(13).is_err());
        assert!(StateVector::zero(0).is_err());
    }

    #[test]
    fn expectation_of_basis_states() {
        assert_eq!(StateVector::zero(1).unwrap().expectation_z(0).unwrap(), 1.0);
        assert_eq!(StateVector::basis(1, 1).unwrap().expectation_z(0).unwrap(), -1.0);
    }

    #[test]
    fn density_matrix_gates() {
        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply(&GateMatrix::x(), &[0]).unwrap();
        assert_abs_diff_eq!(rho.get(1, 1).re, 1.0);
        assert_abs_diff_eq!(rho.get(0, 0).norm(), 0.0);

        let mut rho = DensityMatrix::zero_state(1).unwrap();
        rho.apply(&GateMatrix::h(), &[0]).unwrap();
        for e in rho.elements() {
            assert_abs_diff_eq!(e.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-15);
        }

        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        let mut rho = mixed.clone();
        rho.apply(&GateMatrix::crx(0.7), &[2, 0]).unwrap();
        rho.apply(&GateMatrix::rot(0.1, 0.2, 0.3), &[1]).unwrap();
        for (a, b) in rho.elements().iter().zip(mixed.elements()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn to_density_matrix_examples() {
        let rho = StateVector::zero(1).unwrap().to_density_matrix();
        assert_eq!(rho.elements(), &[ONE, ZERO, ZERO, ZERO]);
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&GateMatrix::h(), &[0]).unwrap();
        let rho = s.to_density_matrix();
        for e in rho.elements() {
            assert_abs_diff_eq!(e.re, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reduced_states_agree_between_representations() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply(&GateMatrix::h(), &[0]).unwrap();
        s.apply(&GateMatrix::crx(1.1), &[0, 2]).unwrap();
        s.apply(&GateMatrix::rot(0.4, 1.3, -0.2), &[1]).unwrap();
        let rho = s.to_density_matrix();
        for q in 0..3 {
            let a = s.reduced_qubit(q).unwrap();
            let b = rho.reduced_qubit(q).unwrap();
            for r in 0..2 {
                for col in 0..2 {
                    assert_abs_diff_eq!((a[r][col] - b[r][col]).norm(), 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn tensor_places_self_on_low_qubits() {
        let low = StateVector::basis(1, 1).unwrap();
        let high = StateVector::zero(2).unwrap();
        let t = low.tensor_high(&high).unwrap();
        assert_eq!(t.num_qubits(), 3);
        assert_abs_diff_eq!(t.amplitudes()[1].re, 1.0);
    }

    #[test]
    fn gate_counter_tracks_applications() {
        let before = gates_executed();
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&GateMatrix::h(), &[0]).unwrap();
        let mut rho = s.to_density_matrix();
        rho.apply(&GateMatrix::cnot(), &[0, 1]).unwrap();
        assert_eq!(gates_executed() - before, 2);
    }
}
