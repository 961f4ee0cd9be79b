//! Linear readout on measured probabilities.
//!
//! Training only solves `W = Y P^+`, where the columns of `P` (Sigma x M) are
//! outcome distributions of the encoded training geometries and the columns
//! of `Y` (targets x M) are their energies and forces. Nothing on the quantum
//! side is optimized.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, Dataset, Geometry, TargetMode};
use crate::encoding::{build_circuit, rescale, sample_reservoir, EncodingSpec, MoleculeSpec, Reservoir};
use crate::error::{QelmError, Result};
use crate::gates::{depth, transpile, DepthReport};
use crate::measurement::{DiagonalObservable, Executor, ProbVector, ShotPlan};

/// Sampling stream tags, so train, test and prediction shots never share seeds.
pub const TRAIN_STREAM: u64 = 0;
pub const TEST_STREAM: u64 = 1;
pub const PREDICT_STREAM: u64 = 2;

pub const DEFAULT_SVD_CUTOFF: f64 = 1e-12;

/// Sigma x M matrix whose column `j` is the outcome distribution of sample `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(DMatrix<f64>);

impl ProbabilityMatrix {
    pub fn from_columns(columns: &[ProbVector]) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(QelmError::InsufficientData("no probability vectors".into()));
        };
        let sigma = first.len();
        if columns.iter().any(|c| c.len() != sigma) {
            return Err(QelmError::DimensionMismatch(
                "probability vectors of unequal length".into(),
            ));
        }
        for (j, c) in columns.iter().enumerate() {
            if (c.total() - 1.0).abs() > 1e-9 {
                return Err(QelmError::Domain(format!("column {j} sums to {}", c.total())));
            }
        }
        let data = columns.iter().flat_map(|c| c.as_slice().iter().copied());
        Ok(ProbabilityMatrix(DMatrix::from_iterator(sigma, columns.len(), data)))
    }

    /// Wraps a raw matrix without checking column sums.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        ProbabilityMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_outcomes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl TargetMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(QelmError::DimensionMismatch(format!(
                "{} labels for {} target rows",
                labels.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QelmError::Domain("targets must be finite".into()));
        }
        Ok(TargetMatrix { values, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], n_samples: usize, labels: Vec<String>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != n_samples) {
            return Err(QelmError::DimensionMismatch("target rows of unequal length".into()));
        }
        let values = DMatrix::from_fn(rows.len(), n_samples, |i, j| rows[i][j]);
        Self::new(values, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Fitted `W` (targets x Sigma), plus an optional per-target offset when
/// the targets were centered before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutMap {
    pub labels: Vec<String>,
    /// Row-major `targets x outcomes`.
    pub weights: Vec<Vec<f64>>,
    pub offset: Option<Vec<f64>>,
    pub svd_cutoff: f64,
    /// Singular values of `P_train` kept by the cutoff.
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl ReadoutMap {
    pub fn from_weights(weights: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != weights.nrows() {
            return Err(QelmError::DimensionMismatch(
                "label count differs from weight rows".into(),
            ));
        }
        Ok(ReadoutMap {
            labels,
            weights: weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
            offset: None,
            svd_cutoff: 0.0,
            rank: 0,
            singular_values: Vec::new(),
        })
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let rows = self.weights.len();
        let cols = self.weights.first().map_or(0, Vec::len);
        DMatrix::from_fn(rows, cols, |i, j| self.weights[i][j])
    }

    pub fn n_targets(&self) -> usize {
        self.weights.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn check_outcomes(&self, n: usize) -> Result<()> {
        if n != self.n_outcomes() {
            return Err(QelmError::DimensionMismatch(format!(
                "readout expects {} outcomes, got {n}",
                self.n_outcomes()
            )));
        }
        Ok(())
    }
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `cutoff * sigma_max` are treated as zero. Returns `(P^+, kept rank, all singular values)`.
pub fn pseudoinverse(p: &DMatrix<f64>, cutoff: f64) -> Result<(DMatrix<f64>, usize, Vec<f64>)> {
    let svd = p.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Err(QelmError::Numerical("SVD did not produce singular vectors".into()));
    };
    let sigma = &svd.singular_values;
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(QelmError::Numerical("non-finite singular values".into()));
    }
    let s_max = sigma.iter().copied().fold(0.0, f64::max);
    let threshold = cutoff * s_max;
    let inv: DVector<f64> = sigma.map(|s| if s > threshold && s > 0.0 { 1.0 / s } else { 0.0 });
    let rank = inv.iter().filter(|&&s| s != 0.0).count();
    // P^+ = V diag(inv) U^T
    let pinv = v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    let mut singular: Vec<f64> = sigma.iter().copied().collect();
    singular.sort_by(|a, b| b.total_cmp(a));
    Ok((pinv, rank, singular))
}

/// `W = Y P^+`; with `center`, fits `Y - mean(Y)` and stores the mean as offset.
pub fn fit_readout(p: &ProbabilityMatrix, y: &TargetMatrix, cutoff: f64, center: bool) -> Result<ReadoutMap> {
    if p.n_samples() != y.values.ncols() {
        return Err(QelmError::DimensionMismatch(format!(
            "{} probability columns against {} target columns",
            p.n_samples(),
            y.values.ncols()
        )));
    }
    if !(0.0..1.0).contains(&cutoff) {
        return Err(QelmError::Config(format!(
            "svd cutoff must lie in [0, 1), got {cutoff}"
        )));
    }
    let (pinv, rank, singular_values) = pseudoinverse(p.matrix(), cutoff)?;
    let (targets, offset) = if center {
        let mean: Vec<f64> = y.values.row_iter().map(|r| r.mean()).collect();
        let centered = DMatrix::from_fn(y.values.nrows(), y.values.ncols(), |i, j| y.values[(i, j)] - mean[i]);
        (centered, Some(mean))
    } else {
        (y.values.clone(), None)
    };
    let w = targets * pinv;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(QelmError::Numerical("readout weights are not finite".into()));
    }
    let mut map = ReadoutMap::from_weights(w, y.labels.clone())?;
    map.offset = offset;
    map.svd_cutoff = cutoff;
    map.rank = rank;
    map.singular_values = singular_values;
    Ok(map)
}

/// `f = W p (+ offset)`.
pub fn predict(map: &ReadoutMap, p: &ProbVector) -> Result<Vec<f64>> {
    map.check_outcomes(p.len())?;
    Ok(map
        .weights
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let base: f64 = row.iter().zip(p.as_slice()).map(|(w, q)| w * q).sum();
            base + map.offset.as_ref().map_or(0.0, |o| o[k])
        })
        .collect())
}

/// Predictions for every column of `p` (targets x M).
pub fn predict_matrix(map: &ReadoutMap, p: &ProbabilityMatrix) -> Result<DMatrix<f64>> {
    map.check_outcomes(p.n_outcomes())?;
    let mut out = map.weight_matrix() * p.matrix();
    if let Some(offset) = &map.offset {
        for (k, mut row) in out.row_iter_mut().enumerate() {
            row.add_scalar_mut(offset[k]);
        }
    }
    Ok(out)
}

/// Per-target test error and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: Vec<String>,
    pub rmse: Vec<f64>,
    pub sqrt_var: Vec<f64>,
    /// `rmse / sqrt_var`; `None` when the targets do not vary.
    pub ratio: Vec<Option<f64>>,
}

impl Metrics {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Row-wise `||y - y_hat|| / sqrt(M)` and `sqrt(mean((y - mean y)^2))`.
pub fn metrics_from_predictions(predictions: &DMatrix<f64>, y: &TargetMatrix) -> Result<Metrics> {
    let m = y.values.ncols();
    if m == 0 {
        return Err(QelmError::InsufficientData("empty test set".into()));
    }
    if predictions.shape() != y.values.shape() {
        return Err(QelmError::DimensionMismatch(format!(
            "predictions {:?} against targets {:?}",
            predictions.shape(),
            y.values.shape()
        )));
    }
    let mut rmse = Vec::new();
    let mut sqrt_var = Vec::new();
    let mut ratio = Vec::new();
    for k in 0..y.values.nrows() {
        let row = y.values.row(k);
        let err = (row - predictions.row(k)).norm() / (m as f64).sqrt();
        let mean = row.mean();
        let spread = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        rmse.push(err);
        sqrt_var.push(spread);
        ratio.push((spread > 0.0).then(|| err / spread));
    }
    Ok(Metrics {
        labels: y.labels.clone(),
        rmse,
        sqrt_var,
        ratio,
    })
}

pub fn score(map: &ReadoutMap, p_test: &ProbabilityMatrix, y_test: &TargetMatrix) -> Result<Metrics> {
    if p_test.n_samples() == 0 {
        return Err(QelmError::InsufficientData("empty test set".into()));
    }
    metrics_from_predictions(&predict_matrix(map, p_test)?, y_test)
}

/// Row `k` of `W` (plus offset) read as the spectrum of a diagonal observable,
/// so that `predict` equals its expectation on the encoded state.
pub fn effective_observables(map: &ReadoutMap) -> Vec<DiagonalObservable> {
    map.weights
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let shift = map.offset.as_ref().map_or(0.0, |o| o[k]);
            DiagonalObservable(row.iter().map(|w| w + shift).collect())
        })
        .collect()
}

/// Column `j` = outcome distribution of the encoded `geometries[j]`.
pub fn build_probability_matrix(
    geometries: &[Geometry],
    molecule: &MoleculeSpec,
    encoding: &EncodingSpec,
    reservoir: &Reservoir,
    executor: &Executor,
    stream: u64,
) -> Result<ProbabilityMatrix> {
    if geometries.is_empty() {
        return Err(QelmError::InsufficientData("no geometries to encode".into()));
    }
    let columns = geometries
        .par_iter()
        .enumerate()
        .map(|(j, g)| {
            let x = rescale(g, molecule)?;
            let circuit = build_circuit(&x, encoding, reservoir)?;
            executor.run(&circuit, stream, j as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMatrix::from_columns(&columns)
}

/// Everything that defines a QELM except the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QelmSetup {
    pub encoding: EncodingSpec,
    pub plan: ShotPlan,
    pub svd_cutoff: f64,
    pub mode: TargetMode,
    pub center: bool,
}

impl QelmSetup {
    pub fn new(encoding: EncodingSpec, plan: ShotPlan) -> Self {
        QelmSetup {
            encoding,
            plan,
            svd_cutoff: DEFAULT_SVD_CUTOFF,
            mode: TargetMode::Joint,
            center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub molecule: MoleculeSpec,
    pub encoding: EncodingSpec,
    pub reservoir: Reservoir,
    pub plan: ShotPlan,
    pub mode: TargetMode,
    pub readout: ReadoutMap,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Circuits executed to build `P_train`.
    pub evaluations: u64,
    pub train_predictions: DMatrix<f64>,
    pub train_metrics: Metrics,
}

pub fn train(setup: &QelmSetup, train_set: &Dataset) -> Result<(TrainedModel, FitReport)> {
    setup.encoding.validate()?;
    if setup.encoding.n_coords != train_set.molecule.n_coords() {
        return Err(QelmError::Config(format!(
            "encoding has {} coordinates but {} has {}",
            setup.encoding.n_coords,
            train_set.molecule.name,
            train_set.molecule.n_coords()
        )));
    }
    let reservoir = sample_reservoir(&setup.encoding);
    let executor = Executor::new(setup.plan);
    let p = build_probability_matrix(
        &train_set.geometries,
        &train_set.molecule,
        &setup.encoding,
        &reservoir,
        &executor,
        TRAIN_STREAM,
    )?;
    let y = train_set.targets(setup.mode)?;
    let readout = fit_readout(&p, &y, setup.svd_cutoff, setup.center)?;
    let train_predictions = predict_matrix(&readout, &p)?;
    let train_metrics = metrics_from_predictions(&train_predictions, &y)?;
    let model = TrainedModel {
        molecule: train_set.molecule.clone(),
        encoding: setup.encoding.clone(),
        reservoir,
        plan: setup.plan,
        mode: setup.mode,
        readout,
    };
    Ok((
        model,
        FitReport {
            evaluations: executor.evaluations(),
            train_predictions,
            train_metrics,
        },
    ))
}

impl TrainedModel {
    pub fn probabilities(&self, geometries: &[Geometry], stream: u64) -> Result<ProbabilityMatrix> {
        let executor = Executor::new(self.plan);
        build_probability_matrix(
            geometries,
            &self.molecule,
            &self.encoding,
            &self.reservoir,
            &executor,
            stream,
        )
    }

    pub fn predict(&self, geometries: &[Geometry], stream: u64) -> Result<DMatrix<f64>> {
        predict_matrix(&self.readout, &self.probabilities(geometries, stream)?)
    }

    pub fn evaluate(&self, test_set: &Dataset) -> Result<Metrics> {
        let p = self.probabilities(&test_set.geometries, TEST_STREAM)?;
        score(&self.readout, &p, &test_set.targets(self.mode)?)
    }

    /// Native depth of the transpiled encoding circuit (input-independent).
    pub fn depth(&self) -> Result<DepthReport> {
        encoding_depth(&self.encoding, &self.reservoir)
    }
}

pub fn encoding_depth(encoding: &EncodingSpec, reservoir: &Reservoir) -> Result<DepthReport> {
    let circuit = build_circuit(&vec![0.0; encoding.n_coords], encoding, reservoir)?;
    Ok(depth(&transpile(&circuit)))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: TrainedModel,
    pub fit: FitReport,
    pub test_metrics: Metrics,
    pub depth: DepthReport,
    pub m_train: usize,
}

/// Train on `m_train` samples drawn by `split(dataset, m_train, split_seed)`,
/// score on the rest.
pub fn run_experiment(
    setup: &QelmSetup,
    dataset: &Dataset,
    m_train: usize,
    split_seed: u64,
) -> Result<ExperimentResult> {
    let (train_set, test_set) = split(dataset, m_train, split_seed)?;
    run_on_split(setup, &train_set, &test_set)
}

pub fn run_on_split(setup: &QelmSetup, train_set: &Dataset, test_set: &Dataset) -> Result<ExperimentResult> {
    let (model, fit) = train(setup, train_set)?;
    let test_metrics = model.evaluate(test_set)?;
    let depth = model.depth()?;
    Ok(ExperimentResult {
        model,
        fit,
        test_metrics,
        depth,
        m_train: train_set.len(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub n_qubits: usize,
    pub m_train: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub rank: usize,
    pub depth: DepthReport,
}

/// Grid of experiments over qubit counts, training sizes and reservoir seeds.
///
/// The test set is fixed across the grid: the dataset is split once with
/// `max(train_sizes)` training samples, and each cell trains on the first
/// `m` of them. A cell's reservoir seed is its entry of `seeds`, so a 1x1x1
/// grid reproduces `run_experiment` with the same seeds.
pub fn sweep(
    template: &QelmSetup,
    dataset: &Dataset,
    qubit_counts: &[usize],
    train_sizes: &[usize],
    seeds: &[u64],
    split_seed: u64,
    workers: usize,
) -> Result<Vec<SweepCell>> {
    let Some(&m_max) = train_sizes.iter().max() else {
        return Err(QelmError::Config("sweep needs at least one training size".into()));
    };
    if qubit_counts.is_empty() || seeds.is_empty() {
        return Err(QelmError::Config("sweep needs qubit counts and seeds".into()));
    }
    if train_sizes.contains(&0) {
        return Err(QelmError::Config("training sizes must be positive".into()));
    }
    let (pool, test_set) = split(dataset, m_max, split_seed)?;
    let cells: Vec<(usize, usize, u64)> = qubit_counts
        .iter()
        .flat_map(|&n| {
            train_sizes
                .iter()
                .flat_map(move |&m| seeds.iter().map(move |&s| (n, m, s)))
        })
        .collect();
    let run_cell = |&(n, m, seed): &(usize, usize, u64)| -> Result<SweepCell> {
        let mut setup = template.clone();
        setup.encoding.n_qubits = n;
        setup.encoding.seed = seed;
        let result = run_on_split(&setup, &pool.head(m), &test_set)?;
        Ok(SweepCell {
            n_qubits: n,
            m_train: m,
            seed,
            metrics: result.test_metrics,
            rank: result.model.readout.rank,
            depth: result.depth,
        })
    };
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QelmError::Config(format!("worker pool: {e}")))?;
    pool_threads.install(|| cells.par_iter().map(run_cell).collect())
}
