//! Native gate set of a superconducting backend (X, sqrt(X), Rz, ECR),
//! decompositions of Rx/Ry into it, and depth accounting.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QelmError, Result};
use crate::sim::{Circuit, GateKind, GateOp, QuantumState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub enum GateMatrix {
    One(Matrix2<Complex64>),
    Two(Matrix4<Complex64>),
}

impl GateMatrix {
    pub fn adjoint(&self) -> GateMatrix {
        match self {
            GateMatrix::One(m) => GateMatrix::One(m.adjoint()),
            GateMatrix::Two(m) => GateMatrix::Two(m.adjoint()),
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        match self {
            GateMatrix::One(m) => DMatrix::from_iterator(2, 2, m.iter().copied()),
            GateMatrix::Two(m) => DMatrix::from_iterator(4, 4, m.iter().copied()),
        }
    }
}

/// Unitary of a gate kind.
///
/// `Rz(a) = diag(e^{-ia/2}, e^{ia/2})`, `Ry(a) = exp(-i a Y/2)`,
/// `Rx(a) = exp(-i a X/2)`. ECR is `Rxx(pi/2) (I (x) X)`, which expands to
/// `(I (x) X - i X (x) I) / sqrt(2)`; the first tensor factor is the first
/// target of the op.
pub fn gate_matrix(kind: &GateKind) -> GateMatrix {
    let c = Complex64::new;
    match *kind {
        GateKind::X => GateMatrix::One(Matrix2::new(ZERO, ONE, ONE, ZERO)),
        GateKind::SqrtX => {
            let p = c(0.5, 0.5);
            let m = c(0.5, -0.5);
            GateMatrix::One(Matrix2::new(p, m, m, p))
        }
        GateKind::Rz(a) => GateMatrix::One(Matrix2::new(
            Complex64::from_polar(1.0, -a / 2.0),
            ZERO,
            ZERO,
            Complex64::from_polar(1.0, a / 2.0),
        )),
        GateKind::Ry(a) => {
            let (s, co) = (a / 2.0).sin_cos();
            GateMatrix::One(Matrix2::new(c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)))
        }
        GateKind::Rx(a) => {
            let (s, co) = (a / 2.0).sin_cos();
            GateMatrix::One(Matrix2::new(c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)))
        }
        GateKind::Ecr => {
            let r = c(FRAC_1_SQRT_2, 0.0);
            let i = c(0.0, -FRAC_1_SQRT_2);
            #[rustfmt::skip]
            let m = Matrix4::new(
                ZERO, r,    i,    ZERO,
                r,    ZERO, ZERO, i,
                i,    ZERO, ZERO, r,
                ZERO, i,    r,    ZERO,
            );
            GateMatrix::Two(m)
        }
    }
}

/// `Rx(a)` as `Rz(pi/2) sqrt(X) Rz(pi + a) sqrt(X) Rz(5pi/2)`, five native
/// gates in application order.
pub fn decompose_rx(qubit: usize, angle: f64) -> Vec<GateOp> {
    vec![
        GateOp::rz(qubit, 5.0 * FRAC_PI_2),
        GateOp::sqrt_x(qubit),
        GateOp::rz(qubit, PI + angle),
        GateOp::sqrt_x(qubit),
        GateOp::rz(qubit, FRAC_PI_2),
    ]
}

/// `Ry(a)` in four native gates, applied in the order
/// `Rz(-pi), sqrt(X), Rz(pi - a), sqrt(X)`.
pub fn decompose_ry(qubit: usize, angle: f64) -> Vec<GateOp> {
    vec![
        GateOp::rz(qubit, -PI),
        GateOp::sqrt_x(qubit),
        GateOp::rz(qubit, PI - angle),
        GateOp::sqrt_x(qubit),
    ]
}

/// Circuit restricted to X, sqrt(X), Rz and ECR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Circuit", into = "Circuit")]
pub struct NativeCircuit(Circuit);

impl NativeCircuit {
    pub fn circuit(&self) -> &Circuit {
        &self.0
    }

    pub fn into_circuit(self) -> Circuit {
        self.0
    }
}

impl TryFrom<Circuit> for NativeCircuit {
    type Error = QelmError;

    fn try_from(circuit: Circuit) -> Result<Self> {
        if let Some(op) = circuit
            .ops()
            .iter()
            .find(|op| matches!(op.kind, GateKind::Rx(_) | GateKind::Ry(_)))
        {
            return Err(QelmError::Unsupported(format!(
                "{} is not a native gate",
                op.kind.name()
            )));
        }
        Ok(NativeCircuit(circuit))
    }
}

impl From<NativeCircuit> for Circuit {
    fn from(native: NativeCircuit) -> Circuit {
        native.0
    }
}

/// Rewrites Rx/Ry through their native decompositions; native ops pass through.
pub fn transpile(circuit: &Circuit) -> NativeCircuit {
    let ops = circuit
        .ops()
        .iter()
        .flat_map(|op| match op.kind {
            GateKind::Rx(a) => decompose_rx(op.targets[0], a),
            GateKind::Ry(a) => decompose_ry(op.targets[0], a),
            _ => vec![op.clone()],
        })
        .collect();
    // Ops were valid in the source circuit and decompositions keep targets.
    NativeCircuit(Circuit::from_ops(circuit.n_qubits(), ops).expect("transpiled ops stay valid"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    pub native_depth: usize,
    pub gate_counts: BTreeMap<String, usize>,
}

impl DepthReport {
    pub fn total_ops(&self) -> usize {
        self.gate_counts.values().sum()
    }
}

/// Dependency-chain depth: each gate sits one level above the latest earlier
/// gate sharing any of its qubits. Every gate has weight 1.
pub fn depth(circuit: &NativeCircuit) -> DepthReport {
    let c = circuit.circuit();
    let mut level = vec![0usize; c.n_qubits()];
    let mut gate_counts = BTreeMap::new();
    for op in c.ops() {
        let next = op.targets.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
        for &q in &op.targets {
            level[q] = next;
        }
        *gate_counts.entry(op.kind.name().to_string()).or_insert(0) += 1;
    }
    DepthReport {
        native_depth: level.into_iter().max().unwrap_or(0),
        gate_counts,
    }
}

/// Full `2^n x 2^n` unitary of a circuit, one basis column at a time.
pub fn circuit_unitary(circuit: &Circuit) -> Result<DMatrix<Complex64>> {
    let dim = 1usize << circuit.n_qubits();
    let mut u = DMatrix::from_element(dim, dim, ZERO);
    for col in 0..dim {
        let mut state = QuantumState::basis(circuit.n_qubits(), col)?;
        state.apply_circuit(circuit)?;
        for (row, amp) in state.amplitudes().iter().enumerate() {
            u[(row, col)] = *amp;
        }
    }
    Ok(u)
}

/// Removes the phase of the first entry (column-major) with modulus above 1e-8.
fn phase_normalized(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    match m.iter().find(|z| z.norm() > 1e-8) {
        Some(pivot) => {
            let phase = pivot.conj() / pivot.norm();
            m.map(|z| z * phase)
        }
        None => m.clone(),
    }
}

/// Elementwise equality up to a global phase.
pub fn equal_up_to_phase(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let (a, b) = (phase_normalized(a), phase_normalized(b));
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}
