//! Dense statevector simulation of pure N-qubit states.
//!
//! Bit ordering is little-endian throughout the crate: qubit `q` is bit `q`
//! of the basis-state index, so on two qubits the index of `|q1 q0>` is
//! `2*q1 + q0`. Probabilities, sampling and outcome labels all follow it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QelmError, Result};
use crate::gates::{self, GateMatrix};

/// Largest register the simulator accepts (2^20 amplitudes, 16 MiB).
pub const MAX_QUBITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    X,
    SqrtX,
    Rz(f64),
    Ry(f64),
    Rx(f64),
    Ecr,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Ecr => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::X => "x",
            GateKind::SqrtX => "sx",
            GateKind::Rz(_) => "rz",
            GateKind::Ry(_) => "ry",
            GateKind::Rx(_) => "rx",
            GateKind::Ecr => "ecr",
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            GateKind::Rz(a) | GateKind::Ry(a) | GateKind::Rx(a) => Some(a),
            _ => None,
        }
    }
}

/// A gate together with the qubits it acts on.
///
/// For ECR, `targets[0]` is the first tensor factor of the 4x4 matrix
/// returned by [`gates::gate_matrix`] (the cross-resonance control).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl GateOp {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Self {
        GateOp { kind, targets }
    }

    pub fn x(q: usize) -> Self {
        Self::new(GateKind::X, vec![q])
    }

    pub fn sqrt_x(q: usize) -> Self {
        Self::new(GateKind::SqrtX, vec![q])
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Self::new(GateKind::Rz(angle), vec![q])
    }

    pub fn ry(q: usize, angle: f64) -> Self {
        Self::new(GateKind::Ry(angle), vec![q])
    }

    pub fn rx(q: usize, angle: f64) -> Self {
        Self::new(GateKind::Rx(angle), vec![q])
    }

    pub fn ecr(first: usize, second: usize) -> Self {
        Self::new(GateKind::Ecr, vec![first, second])
    }

    /// Checks arity, range and distinctness of the targets.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.targets.len() != self.kind.arity() {
            return Err(QelmError::DimensionMismatch(format!(
                "{} expects {} target(s), got {}",
                self.kind.name(),
                self.kind.arity(),
                self.targets.len()
            )));
        }
        for &q in &self.targets {
            if q >= n_qubits {
                return Err(QelmError::Index { index: q, n_qubits });
            }
        }
        if self.targets.len() == 2 && self.targets[0] == self.targets[1] {
            return Err(QelmError::Index {
                index: self.targets[1],
                n_qubits,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        Ok(Circuit {
            n_qubits,
            ops: Vec::new(),
        })
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<GateOp>) -> Result<Self> {
        let mut circuit = Circuit::new(n_qubits)?;
        for op in ops {
            circuit.push(op)?;
        }
        Ok(circuit)
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Replaces the rotation angle of op `index`. Fails for non-rotation gates.
    pub fn set_angle(&mut self, index: usize, angle: f64) -> Result<()> {
        let op = self
            .ops
            .get_mut(index)
            .ok_or_else(|| QelmError::DimensionMismatch(format!("circuit has no op {index}")))?;
        op.kind = match op.kind {
            GateKind::Rz(_) => GateKind::Rz(angle),
            GateKind::Ry(_) => GateKind::Ry(angle),
            GateKind::Rx(_) => GateKind::Rx(angle),
            other => {
                return Err(QelmError::Unsupported(format!(
                    "{} has no angle parameter",
                    other.name()
                )))
            }
        };
        Ok(())
    }
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n_qubits) {
        Ok(())
    } else {
        Err(QelmError::Size(n_qubits))
    }
}

/// Pure state of `n_qubits` qubits as 2^n complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { n_qubits, amplitudes })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero(n_qubits)?;
        if index >= state.amplitudes.len() {
            return Err(QelmError::Index { index, n_qubits });
        }
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Wraps raw amplitudes. The length must be a power of two; the vector is
    /// not renormalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QelmError::DimensionMismatch(format!(
                "{len} amplitudes is not a qubit register"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        Ok(QuantumState { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_gate(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.apply_matrix(&gates::gate_matrix(&op.kind), &op.targets);
        Ok(())
    }

    /// Applies the adjoint of `op`.
    pub fn apply_gate_adjoint(&mut self, op: &GateOp) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.apply_matrix(&gates::gate_matrix(&op.kind).adjoint(), &op.targets);
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        self.check_circuit(circuit)?;
        for op in &circuit.ops {
            self.apply_matrix(&gates::gate_matrix(&op.kind), &op.targets);
        }
        Ok(())
    }

    /// Applies `U(circuit)^dagger`: reversed order, each gate adjointed.
    pub fn apply_circuit_adjoint(&mut self, circuit: &Circuit) -> Result<()> {
        self.check_circuit(circuit)?;
        for op in circuit.ops.iter().rev() {
            self.apply_matrix(&gates::gate_matrix(&op.kind).adjoint(), &op.targets);
        }
        Ok(())
    }

    fn check_circuit(&self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits != self.n_qubits {
            return Err(QelmError::DimensionMismatch(format!(
                "circuit on {} qubits applied to {}-qubit state",
                circuit.n_qubits, self.n_qubits
            )));
        }
        Ok(())
    }

    fn apply_matrix(&mut self, matrix: &GateMatrix, targets: &[usize]) {
        match matrix {
            GateMatrix::One(m) => {
                let bit = 1usize << targets[0];
                let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
                for i in 0..self.amplitudes.len() {
                    if i & bit == 0 {
                        let a0 = self.amplitudes[i];
                        let a1 = self.amplitudes[i | bit];
                        self.amplitudes[i] = m00 * a0 + m01 * a1;
                        self.amplitudes[i | bit] = m10 * a0 + m11 * a1;
                    }
                }
            }
            GateMatrix::Two(m) => {
                // Local index = 2 * bit(targets[0]) + bit(targets[1]).
                let hi = 1usize << targets[0];
                let lo = 1usize << targets[1];
                for i in 0..self.amplitudes.len() {
                    if i & (hi | lo) == 0 {
                        let idx = [i, i | lo, i | hi, i | hi | lo];
                        let a = idx.map(|k| self.amplitudes[k]);
                        for (row, &k) in idx.iter().enumerate() {
                            self.amplitudes[k] = (0..4).map(|col| m[(row, col)] * a[col]).sum();
                        }
                    }
                }
            }
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(QelmError::DimensionMismatch(format!(
                "inner product of {}- and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// `|<a|b>|^2`, equal to `Tr(rho_a rho_b)` for pure states.
pub fn overlap(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Runs `circuit` on `|0...0>`.
pub fn run_from_zero(circuit: &Circuit) -> Result<QuantumState> {
    let mut state = QuantumState::zero(circuit.n_qubits())?;
    state.apply_circuit(circuit)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    fn probs(s: &QuantumState) -> Vec<f64> {
        s.amplitudes().iter().map(|a| a.norm_sqr()).collect()
    }

    fn random_native_circuit(n: usize, len: usize, seed: u64) -> Circuit {
        let mut r = rng::stream(seed);
        let mut c = Circuit::new(n).unwrap();
        for _ in 0..len {
            let q = rng::below(&mut r, n);
            let angle = (rng::unit_open(&mut r) - 0.5) * 4.0 * PI;
            let op = match rng::below(&mut r, if n > 1 { 6 } else { 5 }) {
                0 => GateOp::x(q),
                1 => GateOp::sqrt_x(q),
                2 => GateOp::rz(q, angle),
                3 => GateOp::ry(q, angle),
                4 => GateOp::rx(q, angle),
                _ => {
                    let p = (q + 1 + rng::below(&mut r, n - 1)) % n;
                    GateOp::ecr(q, p)
                }
            };
            c.push(op).unwrap();
        }
        c
    }

    #[test]
    fn zero_state_layouts() {
        let s = QuantumState::zero(1).unwrap();
        assert_eq!(probs(&s), vec![1.0, 0.0]);
        let s = QuantumState::zero(2).unwrap();
        assert_eq!(probs(&s), vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(QuantumState::zero(21), Err(QelmError::Size(21))));
        assert!(matches!(QuantumState::zero(0), Err(QelmError::Size(0))));
    }

    #[test]
    fn x_flips_least_significant_bit() {
        let mut s = QuantumState::zero(2).unwrap();
        s.apply_gate(&GateOp::x(0)).unwrap();
        assert_eq!(probs(&s), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rz_leaves_populations_alone() {
        for phi in [0.0, 0.3, PI, -2.0] {
            let mut s = QuantumState::zero(1).unwrap();
            s.apply_gate(&GateOp::rz(0, phi)).unwrap();
            let p = probs(&s);
            assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        }
    }

    #[test]
    fn sqrt_x_makes_even_superposition() {
        let mut s = QuantumState::zero(1).unwrap();
        s.apply_gate(&GateOp::sqrt_x(0)).unwrap();
        let p = probs(&s);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_targets_rejected() {
        let mut s = QuantumState::zero(2).unwrap();
        assert!(matches!(
            s.apply_gate(&GateOp::x(2)),
            Err(QelmError::Index { index: 2, .. })
        ));
        assert!(s.apply_gate(&GateOp::ecr(1, 1)).is_err());
        assert!(s.apply_gate(&GateOp::new(GateKind::Ecr, vec![0])).is_err());
        let mut c = Circuit::new(2).unwrap();
        assert!(c.push(GateOp::rz(5, 0.1)).is_err());
    }

    #[test]
    fn empty_and_involutive_circuits() {
        let c = Circuit::new(3).unwrap();
        let mut s = QuantumState::basis(3, 5).unwrap();
        let before = s.clone();
        s.apply_circuit(&c).unwrap();
        assert_eq!(s, before);

        let c = Circuit::from_ops(1, vec![GateOp::x(0), GateOp::x(0)]).unwrap();
        let s = run_from_zero(&c).unwrap();
        assert_eq!(probs(&s), vec![1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_on_circuit() {
        let c = Circuit::new(2).unwrap();
        let mut s = QuantumState::zero(3).unwrap();
        assert!(matches!(s.apply_circuit(&c), Err(QelmError::DimensionMismatch(_))));
    }

    #[test]
    fn random_three_qubit_circuit_keeps_norm() {
        let c = random_native_circuit(3, 60, 11);
        let s = run_from_zero(&c).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_examples() {
        let zero = QuantumState::zero(1).unwrap();
        let one = QuantumState::basis(1, 1).unwrap();
        let mut half = zero.clone();
        half.apply_gate(&GateOp::sqrt_x(0)).unwrap();
        assert!((overlap(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(overlap(&zero, &one).unwrap(), 0.0);
        assert!((overlap(&zero, &half).unwrap() - 0.5).abs() < 1e-15);
        assert!(overlap(&zero, &QuantumState::zero(2).unwrap()).is_err());
    }

    #[test]
    fn long_random_circuits_preserve_norm() {
        for (seed, n) in (0..8u64).zip([1usize, 2, 3, 4, 5, 6, 7, 8]) {
            let c = random_native_circuit(n, 200, seed);
            let s = run_from_zero(&c).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn circuit_then_adjoint_is_identity() {
        for seed in 0..5u64 {
            let c = random_native_circuit(4, 120, 100 + seed);
            let start = QuantumState::basis(4, 9).unwrap();
            let mut s = start.clone();
            s.apply_circuit(&c).unwrap();
            s.apply_circuit_adjoint(&c).unwrap();
            for (a, b) in s.amplitudes().iter().zip(start.amplitudes()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gate_application_is_linear() {
        // Apply to basis states, recombine, and compare with applying to the superposition.
        let c = random_native_circuit(3, 40, 77);
        let alpha = Complex64::new(0.6, -0.2);
        let beta = Complex64::new(-0.1, 0.7);
        let mut a = QuantumState::basis(3, 2).unwrap();
        let mut b = QuantumState::basis(3, 6).unwrap();
        let combo: Vec<Complex64> = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let mut combo = QuantumState::from_amplitudes(combo).unwrap();
        for op in c.ops() {
            a.apply_gate(op).unwrap();
            b.apply_gate(op).unwrap();
            combo.apply_gate(op).unwrap();
        }
        for i in 0..8 {
            let expect = alpha * a.amplitudes()[i] + beta * b.amplitudes()[i];
            assert!((combo.amplitudes()[i] - expect).norm() < 1e-12);
        }
    }
}
