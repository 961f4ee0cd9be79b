//! Geometry/energy/force datasets: CSV ingestion, splitting, coordinate
//! sampling and analytic stand-in surfaces.
//!
//! Dataset CSV layout (UTF-8, LF line endings, `.` decimal point):
//!
//! ```text
//! coord_1,...,coord_X,energy,force_1,...,force_X
//! ```
//!
//! Lengths in angstrom, angles in radians, energy in hartree and forces in
//! hartree per coordinate unit (hartree/angstrom for bonds). The force on a
//! coordinate is `-dE/dq`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{CoordKind, MoleculeSpec};
use crate::error::{QelmError, Result};
use crate::rng;
use crate::training::TargetMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry(Vec<f64>);

impl Geometry {
    pub fn new(coords: Vec<f64>) -> Self {
        Geometry(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Lengths positive, angles in `(0, pi)`.
    pub fn validate(&self, molecule: &MoleculeSpec) -> Result<()> {
        if self.0.len() != molecule.n_coords() {
            return Err(QelmError::DimensionMismatch(format!(
                "{} expects {} coordinates, got {}",
                molecule.name,
                molecule.n_coords(),
                self.0.len()
            )));
        }
        for (i, (&v, kind)) in self.0.iter().zip(&molecule.coord_kinds).enumerate() {
            let ok = match kind {
                CoordKind::BondLength => v > 0.0 && v.is_finite(),
                CoordKind::BondAngle => v > 0.0 && v < PI,
            };
            if !ok {
                let what = match kind {
                    CoordKind::BondLength => "bond length must be positive",
                    CoordKind::BondAngle => "bond angle must lie in (0, pi) radians",
                };
                return Err(QelmError::Domain(format!("coord_{}: {what}, got {v}", i + 1)));
            }
        }
        Ok(())
    }
}

/// Which targets enter the readout fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Energy plus one force per coordinate, fitted jointly.
    #[default]
    Joint,
    EnergyOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub molecule: MoleculeSpec,
    pub geometries: Vec<Geometry>,
    pub energies: Vec<f64>,
    pub forces: Vec<Vec<f64>>,
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.geometries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometries.is_empty()
    }

    fn subset(&self, indices: &[usize], provenance: String) -> Dataset {
        Dataset {
            molecule: self.molecule.clone(),
            geometries: indices.iter().map(|&i| self.geometries[i].clone()).collect(),
            energies: indices.iter().map(|&i| self.energies[i]).collect(),
            forces: indices.iter().map(|&i| self.forces[i].clone()).collect(),
            provenance,
        }
    }

    /// First `m` samples.
    pub fn head(&self, m: usize) -> Dataset {
        let idx: Vec<usize> = (0..m.min(self.len())).collect();
        self.subset(&idx, self.provenance.clone())
    }

    pub fn target_labels(&self, mode: TargetMode) -> Vec<String> {
        let mut labels = vec!["E".to_string()];
        if mode == TargetMode::Joint {
            labels.extend((1..=self.molecule.n_coords()).map(|i| format!("F{i}")));
        }
        labels
    }

    /// Targets as a `Y x M` matrix (row 0 energy, then forces when joint).
    pub fn targets(&self, mode: TargetMode) -> Result<TargetMatrix> {
        let labels = self.target_labels(mode);
        let m = self.len();
        let mut rows = vec![self.energies.clone()];
        if mode == TargetMode::Joint {
            for k in 0..self.molecule.n_coords() {
                rows.push(self.forces.iter().map(|f| f[k]).collect());
            }
        }
        TargetMatrix::from_rows(&rows, m, labels)
    }
}

pub fn csv_header(n_coords: usize, with_targets: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=n_coords).map(|i| format!("coord_{i}")).collect();
    if with_targets {
        h.push("energy".into());
        h.extend((1..=n_coords).map(|i| format!("force_{i}")));
    }
    h
}

/// Geometries with optional reference targets, as read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryTable {
    pub geometries: Vec<Geometry>,
    /// `(energy, forces)` per row when the file carries targets.
    pub targets: Option<Vec<(f64, Vec<f64>)>>,
}

fn parse_error(line: u64, message: impl Into<String>) -> QelmError {
    QelmError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads either the full dataset schema or the coordinates-only prefix of it.
pub fn read_geometry_table(path: &Path, molecule: &MoleculeSpec) -> Result<GeometryTable> {
    let file = File::open(path).map_err(|e| QelmError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let x = molecule.n_coords();
    let with_targets = if header == csv_header(x, true) {
        true
    } else if header == csv_header(x, false) {
        false
    } else {
        return Err(parse_error(
            1,
            format!(
                "header {:?} does not match {} with {x} coordinates (expected {:?})",
                header.join(","),
                molecule.name,
                csv_header(x, true).join(",")
            ),
        ));
    };

    let mut geometries = Vec::new();
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let values = record
            .iter()
            .enumerate()
            .map(|(i, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| parse_error(line, format!("column {} ({field:?}) is not a number", header[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_error(line, "non-finite value"));
        }
        let geometry = Geometry::new(values[..x].to_vec());
        geometry
            .validate(molecule)
            .map_err(|e| QelmError::Domain(format!("line {line}: {e}")))?;
        geometries.push(geometry);
        if with_targets {
            targets.push((values[x], values[x + 1..].to_vec()));
        }
    }
    Ok(GeometryTable {
        geometries,
        targets: with_targets.then_some(targets),
    })
}

pub fn load_dataset(path: &Path, molecule: &MoleculeSpec) -> Result<Dataset> {
    let table = read_geometry_table(path, molecule)?;
    let Some(targets) = table.targets else {
        return Err(parse_error(1, "dataset file has no energy/force columns"));
    };
    if table.geometries.is_empty() {
        return Err(QelmError::InsufficientData(format!("{} has no rows", path.display())));
    }
    let (energies, forces) = targets.into_iter().unzip();
    Ok(Dataset {
        molecule: molecule.clone(),
        geometries: table.geometries,
        energies,
        forces,
        provenance: path.display().to_string(),
    })
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| QelmError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub(crate) fn csv_io(path: &Path) -> impl Fn(csv::Error) -> QelmError + '_ {
    move |e| QelmError::io(path, std::io::Error::other(e.to_string()))
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_io(path);
    w.write_record(csv_header(dataset.molecule.n_coords(), true))
        .map_err(&err)?;
    for ((g, e), f) in dataset.geometries.iter().zip(&dataset.energies).zip(&dataset.forces) {
        let row = g
            .coords()
            .iter()
            .chain(std::iter::once(e))
            .chain(f)
            .map(|v| v.to_string());
        w.write_record(row).map_err(&err)?;
    }
    w.flush().map_err(|e| QelmError::io(path, e))?;
    Ok(())
}

/// Shuffles with a seeded Fisher-Yates pass and returns `(first m_train, rest)`.
pub fn split(dataset: &Dataset, m_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if m_train == 0 || m_train >= dataset.len() {
        return Err(QelmError::InsufficientData(format!(
            "cannot take {m_train} training samples from {} (need 1 <= m_train < size)",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut r = rng::stream(seed);
    for i in (1..order.len()).rev() {
        let j = rng::below(&mut r, i + 1);
        order.swap(i, j);
    }
    let train = dataset.subset(&order[..m_train], format!("{} [train seed={seed}]", dataset.provenance));
    let test = dataset.subset(&order[m_train..], format!("{} [test seed={seed}]", dataset.provenance));
    Ok((train, test))
}

/// Closed sampling interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges(pub Vec<[f64; 2]>);

impl SamplingRanges {
    pub fn validate(&self) -> Result<()> {
        for (i, [lo, hi]) in self.0.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(QelmError::Config(format!(
                    "range for coord_{} is invalid: [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Symmetric intervals `center +- half_width`.
    pub fn centered(centers: &[f64], half_widths: &[f64]) -> Self {
        SamplingRanges(centers.iter().zip(half_widths).map(|(c, w)| [c - w, c + w]).collect())
    }

    /// 0.9 A to 4.5 A.
    pub fn lih() -> Self {
        SamplingRanges(vec![[0.9, 4.5]])
    }

    /// O-H lengths 0.964 +- 0.2 A, H-O-H angle 102.792 +- 13.0 degrees.
    pub fn water() -> Self {
        SamplingRanges::centered(
            &[0.964, 0.964, 102.792f64.to_radians()],
            &[0.2, 0.2, 13.0f64.to_radians()],
        )
    }

    /// +-0.10 A for bonds to hydrogen, +-0.15 A for the others, +-8 degrees
    /// for angles, around the equilibrium values in [`formamide_equilibrium`].
    pub fn formamide() -> Self {
        let w_angle = 8.0f64.to_radians();
        SamplingRanges::centered(
            &formamide_equilibrium(),
            &[0.10, 0.15, 0.15, 0.10, w_angle, w_angle, w_angle, w_angle],
        )
    }

    pub fn preset(molecule: &str) -> Option<Self> {
        match molecule.to_ascii_lowercase().as_str() {
            "lih" => Some(Self::lih()),
            "h2o" | "water" => Some(Self::water()),
            "hconh2" | "formamide" => Some(Self::formamide()),
            _ => None,
        }
    }
}

/// Approximate planar formamide equilibrium: C-H, C=O, C-N, N-H (A) then
/// H-C-O, O-C-N, C-N-H, C-N-H' (rad).
pub fn formamide_equilibrium() -> Vec<f64> {
    vec![
        1.098,
        1.212,
        1.360,
        1.002,
        122.5f64.to_radians(),
        124.7f64.to_radians(),
        119.4f64.to_radians(),
        121.6f64.to_radians(),
    ]
}

/// `m` geometries, each coordinate `lo + (hi - lo) u` with `u` uniform on `[0, 1)`.
pub fn sample_geometries(ranges: &SamplingRanges, m: usize, seed: u64) -> Result<Vec<Geometry>> {
    ranges.validate()?;
    if m == 0 {
        return Err(QelmError::Config("sample count must be at least 1".into()));
    }
    let mut r = rng::stream(seed);
    Ok((0..m)
        .map(|_| {
            Geometry::new(
                ranges
                    .0
                    .iter()
                    .map(|&[lo, hi]| {
                        if lo == hi {
                            lo
                        } else {
                            lo + (hi - lo) * rng::unit_closed_open(&mut r)
                        }
                    })
                    .collect(),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorseParams {
    /// Well depth (hartree).
    pub depth: f64,
    /// Width parameter (1/angstrom).
    pub width: f64,
    /// Equilibrium distance (angstrom).
    pub r_eq: f64,
    /// Energy at the minimum (hartree).
    pub e_min: f64,
}

impl Default for MorseParams {
    /// LiH-like curve: D ~ 2.5 eV, r_eq = 1.595 A, curvature from the 1406 cm^-1
    /// harmonic frequency, minimum near the all-electron total energy.
    fn default() -> Self {
        MorseParams {
            depth: 0.0924,
            width: 1.128,
            r_eq: 1.595,
            e_min: -7.882,
        }
    }
}

/// `E = E_min + D (1 - exp(-a (r - r_eq)))^2` and `F = -dE/dr`.
pub fn morse_surface(r: f64, p: &MorseParams) -> (f64, f64) {
    let e = (-p.width * (r - p.r_eq)).exp();
    let energy = p.e_min + p.depth * (1.0 - e) * (1.0 - e);
    let force = -2.0 * p.depth * p.width * e * (1.0 - e);
    (energy, force)
}

/// Anharmonic polynomial around a minimum `q0`:
/// `E = E0 + sum k_i d_i^2 + sum_{pairs} c_ij d_i d_j + sum g_i d_i^3`, `d = q - q0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyQuadParams {
    pub e_min: f64,
    pub minimum: Vec<f64>,
    pub quadratic: Vec<f64>,
    /// `(i, j, c_ij)` with zero-based `i != j`.
    #[serde(default)]
    pub coupling: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub cubic: Vec<f64>,
}

impl PolyQuadParams {
    fn validate(&self) -> Result<()> {
        let n = self.minimum.len();
        let cubic_ok = self.cubic.is_empty() || self.cubic.len() == n;
        let coupling_ok = self.coupling.iter().all(|&(i, j, _)| i < n && j < n && i != j);
        if self.quadratic.len() != n || !cubic_ok || !coupling_ok {
            return Err(QelmError::Config("polyquad parameters have inconsistent sizes".into()));
        }
        Ok(())
    }

    /// Water-like surface (hartree, angstrom, radian).
    pub fn water() -> Self {
        PolyQuadParams {
            e_min: -76.38,
            minimum: vec![0.964, 0.964, 102.792f64.to_radians()],
            quadratic: vec![0.96, 0.96, 0.08],
            coupling: vec![(0, 1, -0.05), (0, 2, 0.02), (1, 2, 0.02)],
            cubic: vec![-2.1, -2.1, -0.01],
        }
    }

    /// Formamide-like surface around [`formamide_equilibrium`].
    pub fn formamide() -> Self {
        PolyQuadParams {
            e_min: -168.92,
            minimum: formamide_equilibrium(),
            quadratic: vec![0.80, 2.30, 1.30, 1.00, 0.10, 0.12, 0.08, 0.08],
            coupling: vec![(1, 2, 0.15), (0, 4, 0.03), (2, 5, 0.05), (3, 6, 0.02), (6, 7, 0.01)],
            cubic: vec![-1.6, -5.0, -3.0, -2.2, -0.02, -0.02, -0.01, -0.01],
        }
    }
}

pub fn polyquad_surface(coords: &[f64], p: &PolyQuadParams) -> Result<(f64, Vec<f64>)> {
    p.validate()?;
    if coords.len() != p.minimum.len() {
        return Err(QelmError::DimensionMismatch(format!(
            "surface has {} coordinates, got {}",
            p.minimum.len(),
            coords.len()
        )));
    }
    let d: Vec<f64> = coords.iter().zip(&p.minimum).map(|(q, q0)| q - q0).collect();
    let mut energy = p.e_min;
    let mut grad = vec![0.0; d.len()];
    for (i, &di) in d.iter().enumerate() {
        energy += p.quadratic[i] * di * di;
        grad[i] += 2.0 * p.quadratic[i] * di;
        if let Some(&g) = p.cubic.get(i) {
            energy += g * di * di * di;
            grad[i] += 3.0 * g * di * di;
        }
    }
    for &(i, j, c) in &p.coupling {
        energy += c * d[i] * d[j];
        grad[i] += c * d[j];
        grad[j] += c * d[i];
    }
    Ok((energy, grad.into_iter().map(|g| -g).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    Morse(MorseParams),
    Polyquad(PolyQuadParams),
}

impl Surface {
    pub fn preset(molecule: &str) -> Option<Self> {
        match molecule.to_ascii_lowercase().as_str() {
            "lih" => Some(Surface::Morse(MorseParams::default())),
            "h2o" | "water" => Some(Surface::Polyquad(PolyQuadParams::water())),
            "hconh2" | "formamide" => Some(Surface::Polyquad(PolyQuadParams::formamide())),
            _ => None,
        }
    }

    pub fn evaluate(&self, geometry: &Geometry) -> Result<(f64, Vec<f64>)> {
        match self {
            Surface::Morse(p) => match geometry.coords() {
                [r] => {
                    let (e, f) = morse_surface(*r, p);
                    Ok((e, vec![f]))
                }
                other => Err(QelmError::DimensionMismatch(format!(
                    "Morse surface takes one bond length, got {} coordinates",
                    other.len()
                ))),
            },
            Surface::Polyquad(p) => polyquad_surface(geometry.coords(), p),
        }
    }
}

/// Samples `m` geometries and labels them with `surface`.
pub fn generate_synthetic(
    molecule: &MoleculeSpec,
    surface: &Surface,
    ranges: &SamplingRanges,
    m: usize,
    seed: u64,
) -> Result<Dataset> {
    if ranges.0.len() != molecule.n_coords() {
        return Err(QelmError::Config(format!(
            "{} ranges given for {} coordinates",
            ranges.0.len(),
            molecule.n_coords()
        )));
    }
    let geometries = sample_geometries(ranges, m, seed)?;
    let mut energies = Vec::with_capacity(m);
    let mut forces = Vec::with_capacity(m);
    for g in &geometries {
        g.validate(molecule)?;
        let (e, f) = surface.evaluate(g)?;
        energies.push(e);
        forces.push(f);
    }
    Ok(Dataset {
        molecule: molecule.clone(),
        geometries,
        energies,
        forces,
        provenance: format!("synthetic {} seed={seed}", molecule.name),
    })
}

/// Writes `text` to `path`, surfacing the path on failure.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| QelmError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| QelmError::io(path, e))
}
