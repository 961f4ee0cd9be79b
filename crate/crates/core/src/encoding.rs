//! Fourier encoding of molecular coordinates into a qubit register.
//!
//! The encoding unitary for inputs `x_1..x_X` is
//!
//! ```text
//! U(x) = Wmix * exp(-i x_X G) W(X) ... exp(-i x_2 G) W(2) exp(-i x_1 G) W(1)
//! ```
//!
//! with `G = 1/2 sum_q Z_q`, i.e. one `Rz(x_j)` on every qubit, and every
//! `W` block made of layers of the form "Ry(theta) on each qubit, then an
//! ECR ladder over neighbouring pairs". Block angles are drawn once, uniformly
//! in `(0, pi/2)`, and fixed for the lifetime of a model.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::data::Geometry;
use crate::error::{QelmError, Result};
use crate::rng;
use crate::sim::{Circuit, GateOp, QuantumState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    BondLength,
    BondAngle,
}

/// Coordinate layout of a molecule and how each coordinate maps to an angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub name: String,
    pub coord_kinds: Vec<CoordKind>,
    /// Bond lengths are mapped to `r / reference_length * pi` (angstrom).
    pub reference_length: f64,
    /// Bond angles are mapped to `phi / angle_divisor` (radians).
    pub angle_divisor: f64,
}

impl MoleculeSpec {
    pub fn new(name: &str, coord_kinds: Vec<CoordKind>, reference_length: f64) -> Result<Self> {
        let spec = MoleculeSpec {
            name: name.to_string(),
            coord_kinds,
            reference_length,
            angle_divisor: 2.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coord_kinds.is_empty() {
            return Err(QelmError::Config(format!("molecule {} has no coordinates", self.name)));
        }
        if !(self.reference_length > 0.0) || !(self.angle_divisor > 0.0) {
            return Err(QelmError::Config(format!(
                "molecule {}: reference length and angle divisor must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Lithium hydride: one Li-H bond, reference length 6 A.
    pub fn lih() -> Self {
        MoleculeSpec {
            name: "LiH".into(),
            coord_kinds: vec![CoordKind::BondLength],
            reference_length: 6.0,
            angle_divisor: 2.0,
        }
    }

    /// Water: `r1, r2` (O-H) and the H-O-H angle; reference length 2 A.
    pub fn water() -> Self {
        MoleculeSpec {
            name: "H2O".into(),
            coord_kinds: vec![CoordKind::BondLength, CoordKind::BondLength, CoordKind::BondAngle],
            reference_length: 2.0,
            angle_divisor: 2.0,
        }
    }

    /// Planar formamide with both N-H bonds tied: four bond lengths
    /// (C-H, C=O, C-N, N-H) and four angles (H-C-O, O-C-N, C-N-H, C-N-H').
    pub fn formamide() -> Self {
        use CoordKind::*;
        MoleculeSpec {
            name: "HCONH2".into(),
            coord_kinds: vec![
                BondLength, BondLength, BondLength, BondLength, BondAngle, BondAngle, BondAngle, BondAngle,
            ],
            reference_length: 2.0,
            angle_divisor: 2.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lih" => Some(Self::lih()),
            "h2o" | "water" => Some(Self::water()),
            "hconh2" | "formamide" => Some(Self::formamide()),
            _ => None,
        }
    }

    pub fn n_coords(&self) -> usize {
        self.coord_kinds.len()
    }
}

/// Maps a geometry to rotation angles: lengths to `r/r_ref * pi`, angles to `phi/divisor`.
pub fn rescale(geometry: &Geometry, molecule: &MoleculeSpec) -> Result<Vec<f64>> {
    let coords = geometry.coords();
    if coords.len() != molecule.n_coords() {
        return Err(QelmError::DimensionMismatch(format!(
            "{} expects {} coordinates, got {}",
            molecule.name,
            molecule.n_coords(),
            coords.len()
        )));
    }
    coords
        .iter()
        .zip(&molecule.coord_kinds)
        .enumerate()
        .map(|(i, (&value, kind))| match kind {
            CoordKind::BondLength if value <= 0.0 || !value.is_finite() => Err(QelmError::Domain(format!(
                "coordinate {} is a bond length and must be positive, got {value}",
                i + 1
            ))),
            CoordKind::BondLength => Ok(value / molecule.reference_length * PI),
            CoordKind::BondAngle => Ok(value / molecule.angle_divisor),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// ECR on (0,1), (1,2), ..., (N-2, N-1).
    #[default]
    Linear,
    /// Linear ladder closed with (N-1, 0) when N > 2.
    Ring,
}

fn default_layers() -> usize {
    1
}

fn default_mixing() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub n_qubits: usize,
    pub n_coords: usize,
    pub seed: u64,
    #[serde(default = "default_layers")]
    pub layers_per_block: usize,
    #[serde(default = "default_mixing")]
    pub mixing_blocks: usize,
    #[serde(default)]
    pub topology: Topology,
}

impl EncodingSpec {
    pub fn new(n_qubits: usize, n_coords: usize, seed: u64) -> Self {
        EncodingSpec {
            n_qubits,
            n_coords,
            seed,
            layers_per_block: default_layers(),
            mixing_blocks: default_mixing(),
            topology: Topology::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::sim::MAX_QUBITS).contains(&self.n_qubits) {
            return Err(QelmError::Size(self.n_qubits));
        }
        if self.n_coords == 0 {
            return Err(QelmError::Config("encoding needs at least one coordinate".into()));
        }
        if self.layers_per_block == 0 {
            return Err(QelmError::Config("layers_per_block must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.n_coords + self.mixing_blocks
    }

    pub fn entangling_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|q| (q, q + 1)).collect();
        if self.topology == Topology::Ring && n > 2 {
            pairs.push((n - 1, 0));
        }
        pairs
    }
}

/// Fixed random block angles: one block per coordinate followed by the
/// mixing blocks. Each block holds `layers_per_block * n_qubits` angles,
/// layer-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub blocks: Vec<Vec<f64>>,
}

impl Reservoir {
    pub fn block(&self, index: usize) -> &[f64] {
        &self.blocks[index]
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }

    pub fn check_matches(&self, spec: &EncodingSpec) -> Result<()> {
        let per_block = spec.layers_per_block * spec.n_qubits;
        if self.blocks.len() != spec.n_blocks() || self.blocks.iter().any(|b| b.len() != per_block) {
            return Err(QelmError::DimensionMismatch(format!(
                "reservoir shape does not match {} blocks of {} angles",
                spec.n_blocks(),
                per_block
            )));
        }
        Ok(())
    }
}

/// Draws every block angle as `pi/2 * u`, `u` uniform on `(0, 1)` from the
/// stream seeded by `spec.seed`, in block, layer, qubit order.
pub fn sample_reservoir(spec: &EncodingSpec) -> Reservoir {
    let mut r = rng::stream(spec.seed);
    let per_block = spec.layers_per_block * spec.n_qubits;
    let blocks = (0..spec.n_blocks())
        .map(|_| (0..per_block).map(|_| FRAC_PI_2 * rng::unit_open(&mut r)).collect())
        .collect();
    Reservoir { blocks }
}

/// Encoding circuit plus, per coordinate, the op indices of its `Rz` data gates.
#[derive(Debug, Clone)]
pub struct EncodingCircuit {
    pub circuit: Circuit,
    pub data_gates: Vec<Vec<usize>>,
}

fn push_block(circuit: &mut Circuit, spec: &EncodingSpec, angles: &[f64]) -> Result<()> {
    for layer in angles.chunks(spec.n_qubits) {
        for (q, &theta) in layer.iter().enumerate() {
            circuit.push(GateOp::ry(q, theta))?;
        }
        for (a, b) in spec.entangling_pairs() {
            circuit.push(GateOp::ecr(a, b))?;
        }
    }
    Ok(())
}

pub fn build_encoding(x: &[f64], spec: &EncodingSpec, reservoir: &Reservoir) -> Result<EncodingCircuit> {
    spec.validate()?;
    reservoir.check_matches(spec)?;
    if x.len() != spec.n_coords {
        return Err(QelmError::DimensionMismatch(format!(
            "encoding expects {} inputs, got {}",
            spec.n_coords,
            x.len()
        )));
    }
    let mut circuit = Circuit::new(spec.n_qubits)?;
    let mut data_gates = Vec::with_capacity(x.len());
    for (j, &xj) in x.iter().enumerate() {
        push_block(&mut circuit, spec, reservoir.block(j))?;
        let mut indices = Vec::with_capacity(spec.n_qubits);
        for q in 0..spec.n_qubits {
            indices.push(circuit.len());
            circuit.push(GateOp::rz(q, xj))?;
        }
        data_gates.push(indices);
    }
    for b in spec.n_coords..spec.n_blocks() {
        push_block(&mut circuit, spec, reservoir.block(b))?;
    }
    Ok(EncodingCircuit { circuit, data_gates })
}

pub fn build_circuit(x: &[f64], spec: &EncodingSpec, reservoir: &Reservoir) -> Result<Circuit> {
    Ok(build_encoding(x, spec, reservoir)?.circuit)
}

pub fn encode_state(x: &[f64], spec: &EncodingSpec, reservoir: &Reservoir) -> Result<QuantumState> {
    crate::sim::run_from_zero(&build_circuit(x, spec, reservoir)?)
}

/// Product rotation encoding `prod_i exp(-i x_i X_i / 2)`, one qubit per input.
pub fn rotation_encoding_circuit(x: &[f64]) -> Result<Circuit> {
    let ops = x.iter().enumerate().map(|(q, &xq)| GateOp::rx(q, xq)).collect();
    Circuit::from_ops(x.len(), ops)
}
