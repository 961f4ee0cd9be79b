//! Parameter-shift derivatives and circuit-run accounting.
//!
//! For `f(t) = Tr(exp(-itG) O exp(itG) rho)` with `G` having eigenvalues
//! `+-lambda`, `f'(t) = lambda (f(t + pi/(4 lambda)) - f(t - pi/(4 lambda)))`
//! exactly. A single `Rz` gate has `lambda = 1/2` and a shift of `pi/2`.
//!
//! The QELM itself never needs this: forces come out of extra rows of the
//! readout, fitted on the same probability matrix as the energy. The shift
//! rule is kept for diagnostics and for comparing run counts.

use serde::{Deserialize, Serialize};

use crate::data::Geometry;
use crate::encoding::{build_encoding, rescale, CoordKind};
use crate::error::{QelmError, Result};
use crate::measurement::{exact_probabilities, DiagonalObservable};
use crate::sim::{run_from_zero, Circuit};
use crate::training::{effective_observables, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRuleSpec {
    /// Half gap of the generator spectrum.
    pub lambda: f64,
    pub n_shifts: usize,
}

impl ShiftRuleSpec {
    /// Rotation gates `exp(-i t P/2)` for a Pauli `P`.
    pub const PAULI_ROTATION: ShiftRuleSpec = ShiftRuleSpec {
        lambda: 0.5,
        n_shifts: 1,
    };

    pub fn shift(&self) -> f64 {
        std::f64::consts::PI / (4.0 * self.lambda)
    }
}

pub fn shift_rule_derivative(f: impl Fn(f64) -> Result<f64>, theta: f64, spec: &ShiftRuleSpec) -> Result<f64> {
    if !(spec.lambda > 0.0) {
        return Err(QelmError::Domain(format!(
            "lambda must be positive, got {}",
            spec.lambda
        )));
    }
    if spec.n_shifts != 1 {
        return Err(QelmError::Unsupported(format!(
            "only the two-eigenvalue shift rule is available (requested {} shifts)",
            spec.n_shifts
        )));
    }
    let s = spec.shift();
    Ok(spec.lambda * (f(theta + s)? - f(theta - s)?))
}

/// `<O>` on `circuit_at(theta)|0...0>` from exact probabilities.
pub fn expectation(
    circuit_at: impl Fn(f64) -> Result<Circuit>,
    observable: &DiagonalObservable,
    theta: f64,
) -> Result<f64> {
    let state = run_from_zero(&circuit_at(theta)?)?;
    observable.expectation_from(&exact_probabilities(&state))
}

/// Circuit runs per geometry for a model that gets forces from the shift
/// rule: `2 chi S + 1` for `chi` coordinates and `S` shifts.
pub fn shift_rule_evaluations_per_point(n_coords: usize, n_shifts: usize) -> u64 {
    (2 * n_coords * n_shifts + 1) as u64
}

/// Circuit runs per geometry for the QELM readout: one, whatever the number
/// of targets.
pub fn readout_evaluations_per_point(_n_targets: usize) -> u64 {
    1
}

/// `d prediction_k / d q_j` at `geometry`, from the shift rule applied to each
/// data `Rz` gate (product rule over qubits) and the chain rule through the
/// coordinate rescaling. Returns `[target][coordinate]`.
pub fn coordinate_derivatives(model: &TrainedModel, geometry: &Geometry) -> Result<Vec<Vec<f64>>> {
    let x = rescale(geometry, &model.molecule)?;
    let layout = build_encoding(&x, &model.encoding, &model.reservoir)?;
    let observables = effective_observables(&model.readout);
    let spec = ShiftRuleSpec::PAULI_ROTATION;
    let mut out = vec![vec![0.0; x.len()]; observables.len()];
    for (j, gates) in layout.data_gates.iter().enumerate() {
        let scale = match model.molecule.coord_kinds[j] {
            CoordKind::BondLength => std::f64::consts::PI / model.molecule.reference_length,
            CoordKind::BondAngle => 1.0 / model.molecule.angle_divisor,
        };
        for &gate in gates {
            let shifted = |theta: f64| {
                let mut c = layout.circuit.clone();
                c.set_angle(gate, theta)?;
                Ok(exact_probabilities(&run_from_zero(&c)?))
            };
            let plus = shifted(x[j] + spec.shift())?;
            let minus = shifted(x[j] - spec.shift())?;
            for (k, obs) in observables.iter().enumerate() {
                let d = spec.lambda * (obs.expectation_from(&plus)? - obs.expectation_from(&minus)?);
                out[k][j] += d * scale;
            }
        }
    }
    Ok(out)
}

/// Forces `-dE/dq` of the energy readout, differentiated through the circuit.
pub fn shift_rule_forces(model: &TrainedModel, geometry: &Geometry) -> Result<Vec<f64>> {
    let derivs = coordinate_derivatives(model, geometry)?;
    Ok(derivs[0].iter().map(|d| -d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sim::GateOp;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// cos(theta) as <Z> after Ry(pi/2), Rz(theta), Ry(-pi/2) on |0>.
    fn cos_circuit(theta: f64) -> Result<Circuit> {
        Circuit::from_ops(
            1,
            vec![
                GateOp::ry(0, FRAC_PI_2),
                GateOp::rz(0, theta),
                GateOp::ry(0, -FRAC_PI_2),
            ],
        )
    }

    #[test]
    fn cos_circuit_realizes_cosine() {
        let z = DiagonalObservable::pauli_z(1, 0);
        for t in [0.0, 0.4, 2.0] {
            assert!((expectation(cos_circuit, &z, t).unwrap() - t.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn cosine_derivative_examples() {
        let z = DiagonalObservable::pauli_z(1, 0);
        let f = |t| expectation(cos_circuit, &z, t);
        let spec = ShiftRuleSpec::PAULI_ROTATION;
        assert!(shift_rule_derivative(f, 0.0, &spec).unwrap().abs() < 1e-14);
        let d = shift_rule_derivative(f, PI / 3.0, &spec).unwrap();
        assert!((d - (-(PI / 3.0).sin())).abs() < 1e-10, "{d}");
    }

    #[test]
    fn unsupported_and_invalid_specs() {
        let f = |t: f64| Ok(t.sin());
        let multi = ShiftRuleSpec {
            lambda: 0.5,
            n_shifts: 2,
        };
        assert!(matches!(
            shift_rule_derivative(f, 0.0, &multi),
            Err(QelmError::Unsupported(_))
        ));
        let bad = ShiftRuleSpec {
            lambda: 0.0,
            n_shifts: 1,
        };
        assert!(shift_rule_derivative(f, 0.0, &bad).is_err());
    }

    #[test]
    fn generic_lambda_on_trig_function() {
        // f(t) = a + b cos(2 lambda t) + c sin(2 lambda t) is the general form for eigenvalues +-lambda.
        let lambda = 1.7;
        let f = |t: f64| Ok(0.3 + 0.8 * (2.0 * lambda * t).cos() - 0.2 * (2.0 * lambda * t).sin());
        let exact = |t: f64| -1.6 * lambda * (2.0 * lambda * t).sin() - 0.4 * lambda * (2.0 * lambda * t).cos();
        let spec = ShiftRuleSpec { lambda, n_shifts: 1 };
        for t in [-1.0, 0.2, 0.9] {
            assert!((shift_rule_derivative(f, t, &spec).unwrap() - exact(t)).abs() < 1e-12);
        }
    }

    fn random_param_circuit(seed: u64) -> impl Fn(f64) -> Result<Circuit> {
        let mut r = rng::stream(seed);
        let pre: Vec<f64> = (0..3).map(|_| rng::unit_open(&mut r) * PI).collect();
        let post: Vec<f64> = (0..3).map(|_| rng::unit_open(&mut r) * PI).collect();
        move |theta| {
            Circuit::from_ops(
                2,
                vec![
                    GateOp::ry(0, pre[0]),
                    GateOp::ry(1, pre[1]),
                    GateOp::ecr(0, 1),
                    GateOp::rz(1, theta),
                    GateOp::ry(1, post[0]),
                    GateOp::ecr(1, 0),
                    GateOp::ry(0, post[1]),
                    GateOp::rz(0, post[2]),
                ],
            )
        }
    }

    #[test]
    fn agrees_with_central_differences() {
        let mut r = rng::stream(99);
        for seed in 0..50 {
            let circuit = random_param_circuit(seed);
            let obs = DiagonalObservable((0..4).map(|_| rng::unit_open(&mut r) * 2.0 - 1.0).collect());
            let theta = (rng::unit_open(&mut r) - 0.5) * 2.0 * PI;
            let f = |t| expectation(&circuit, &obs, t);
            let d = shift_rule_derivative(f, theta, &ShiftRuleSpec::PAULI_ROTATION).unwrap();
            let h = 1e-5;
            let fd = (f(theta + h).unwrap() - f(theta - h).unwrap()) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_in_observable() {
        let circuit = random_param_circuit(3);
        let a = DiagonalObservable(vec![0.1, 0.7, -0.4, 0.2]);
        let b = DiagonalObservable(vec![-0.3, 0.5, 0.9, 0.0]);
        let (ca, cb) = (1.5, -0.25);
        let combo = DiagonalObservable(a.0.iter().zip(&b.0).map(|(x, y)| ca * x + cb * y).collect());
        let spec = ShiftRuleSpec::PAULI_ROTATION;
        let d = |o: &DiagonalObservable| shift_rule_derivative(|t| expectation(&circuit, o, t), 0.8, &spec).unwrap();
        assert!((d(&combo) - (ca * d(&a) + cb * d(&b))).abs() < 1e-12);
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        use crate::data::{generate_synthetic, SamplingRanges, Surface};
        use crate::encoding::{EncodingSpec, MoleculeSpec};
        use crate::measurement::ShotPlan;
        use crate::training::{train, QelmSetup, PREDICT_STREAM};

        for (name, n_qubits) in [("lih", 4), ("h2o", 4)] {
            let molecule = MoleculeSpec::preset(name).unwrap();
            let ranges = SamplingRanges::preset(name).unwrap();
            let ds = generate_synthetic(&molecule, &Surface::preset(name).unwrap(), &ranges, 40, 1).unwrap();
            let setup = QelmSetup::new(EncodingSpec::new(n_qubits, molecule.n_coords(), 5), ShotPlan::exact());
            let (model, _) = train(&setup, &ds).unwrap();
            let g = &ds.geometries[3];
            let grad = coordinate_derivatives(&model, g).unwrap();
            let h = 1e-5;
            for j in 0..molecule.n_coords() {
                let shifted = |d: f64| {
                    let mut c = g.coords().to_vec();
                    c[j] += d;
                    model.predict(&[Geometry::new(c)], PREDICT_STREAM).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                for k in 0..grad.len() {
                    assert!((grad[k][j] - fd[(k, 0)]).abs() < 1e-6, "{name} target {k} coord {j}");
                }
            }
            let forces = shift_rule_forces(&model, g).unwrap();
            assert_eq!(forces[0], -grad[0][0]);
        }
    }

    #[test]
    fn run_counts() {
        assert_eq!(shift_rule_evaluations_per_point(3, 1), 7);
        assert_eq!(shift_rule_evaluations_per_point(1, 1), 3);
        assert_eq!(readout_evaluations_per_point(1), readout_evaluations_per_point(4));
    }
}
