//! Experiment runner: one TOML file per experiment, CSV/JSON outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, csv_io, csv_writer, generate_synthetic, load_dataset, read_geometry_table, save_dataset, split, Dataset,
    SamplingRanges, Surface, TargetMode,
};
use crate::encoding::{sample_reservoir, CoordKind, EncodingSpec, MoleculeSpec, Topology};
use crate::error::{QelmError, Result};
use crate::kernels::{spectrum, DEFAULT_SPECTRUM_THRESHOLD};
use crate::measurement::{ShotPlan, Shots};
use crate::rng::derive_seed;
use crate::training::{run_on_split, sweep, Metrics, QelmSetup, TrainedModel, DEFAULT_SVD_CUTOFF, PREDICT_STREAM};

pub const METRICS_HEADER: [&str; 10] = [
    "molecule",
    "n_qubits",
    "m_train",
    "shots",
    "seed",
    "target",
    "rmse",
    "sqrt_var",
    "ratio",
    "depth_native",
];

// Role indices for seeds derived from the master seed.
const DATA_ROLE: u64 = 1;
const SPLIT_ROLE: u64 = 2;
const RESERVOIR_ROLE: u64 = 3;
const SHOTS_ROLE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub seeds: SeedConfig,
    pub molecule: MoleculeConfig,
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub shots: ShotsConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// `master` feeds every role whose own seed is left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub master: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

impl SeedConfig {
    fn role(&self, explicit: Option<u64>, role: u64) -> u64 {
        explicit.unwrap_or_else(|| derive_seed(self.master, role))
    }

    pub fn data_seed(&self) -> u64 {
        self.role(self.data, DATA_ROLE)
    }

    pub fn split_seed(&self) -> u64 {
        self.role(self.split, SPLIT_ROLE)
    }

    pub fn reservoir_seed(&self) -> u64 {
        self.role(self.reservoir, RESERVOIR_ROLE)
    }

    pub fn shots_seed(&self) -> u64 {
        self.role(self.shots, SHOTS_ROLE)
    }
}

/// Either `preset = "lih" | "h2o" | "hconh2"` (fields below override it) or
/// a full explicit description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord_kinds: Option<Vec<CoordKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_divisor: Option<f64>,
}

impl MoleculeConfig {
    pub fn resolve(&self) -> Result<MoleculeSpec> {
        let mut spec = match &self.preset {
            Some(p) => {
                MoleculeSpec::preset(p).ok_or_else(|| QelmError::Config(format!("unknown molecule preset {p:?}")))?
            }
            None => MoleculeSpec {
                name: self
                    .name
                    .clone()
                    .ok_or_else(|| QelmError::Config("molecule needs a preset or a name".into()))?,
                coord_kinds: self
                    .coord_kinds
                    .clone()
                    .ok_or_else(|| QelmError::Config("molecule needs coord_kinds".into()))?,
                reference_length: self
                    .reference_length
                    .ok_or_else(|| QelmError::Config("molecule needs reference_length".into()))?,
                angle_divisor: 2.0,
            },
        };
        if let Some(n) = &self.name {
            spec.name = n.clone();
        }
        if let Some(k) = &self.coord_kinds {
            spec.coord_kinds = k.clone();
        }
        if let Some(r) = self.reference_length {
            spec.reference_length = r;
        }
        if let Some(d) = self.angle_divisor {
            spec.angle_divisor = d;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn preset_key(&self, resolved: &MoleculeSpec) -> String {
        self.preset.clone().unwrap_or_else(|| resolved.name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub n_qubits: usize,
    #[serde(default = "one")]
    pub layers_per_block: usize,
    #[serde(default = "three")]
    pub mixing_blocks: usize,
    #[serde(default)]
    pub topology: Topology,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

impl EncodingConfig {
    fn resolve(&self, n_coords: usize, seed: u64) -> Result<EncodingSpec> {
        let spec = EncodingSpec {
            n_qubits: self.n_qubits,
            n_coords,
            seed,
            layers_per_block: self.layers_per_block,
            mixing_blocks: self.mixing_blocks,
            topology: self.topology,
        };
        spec.validate().map_err(|e| QelmError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotsConfig {
    /// `"inf"` for exact probabilities or a positive shot count.
    pub count: Shots,
}

impl Default for ShotsConfig {
    fn default() -> Self {
        ShotsConfig { count: Shots::Exact }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Existing dataset CSV. Takes precedence over `synthetic` for training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub count: usize,
    /// Defaults to the molecule preset's surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<Surface>,
    /// Defaults to the molecule preset's ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<SamplingRanges>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_train: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_cutoff")]
    pub svd_cutoff: f64,
    #[serde(default)]
    pub mode: TargetMode,
    #[serde(default)]
    pub center: bool,
}

fn default_cutoff() -> f64 {
    DEFAULT_SVD_CUTOFF
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            svd_cutoff: DEFAULT_SVD_CUTOFF,
            mode: TargetMode::default(),
            center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_qubits: Vec<usize>,
    pub m_train: Vec<usize>,
    /// Reservoir seeds, one grid axis.
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Probe axes; all coordinates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_grid() -> usize {
    64
}

fn default_threshold() -> f64 {
    DEFAULT_SPECTRUM_THRESHOLD
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            axes: None,
            grid_size: default_grid(),
            threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub geometries: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| QelmError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QelmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| QelmError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn shot_plan(&self) -> ShotPlan {
        ShotPlan {
            shots: self.shots.count,
            seed: self.seeds.shots_seed(),
        }
    }

    pub fn setup(&self, molecule: &MoleculeSpec) -> Result<QelmSetup> {
        if !(self.training.svd_cutoff >= 0.0) {
            return Err(QelmError::Config("svd_cutoff must be non-negative".into()));
        }
        Ok(QelmSetup {
            encoding: self
                .encoding
                .resolve(molecule.n_coords(), self.seeds.reservoir_seed())?,
            plan: self.shot_plan(),
            svd_cutoff: self.training.svd_cutoff,
            mode: self.training.mode,
            center: self.training.center,
        })
    }

    fn synthetic_dataset(&self, molecule: &MoleculeSpec) -> Result<Dataset> {
        let syn = self
            .data
            .synthetic
            .as_ref()
            .ok_or_else(|| QelmError::Config("data.synthetic section is required".into()))?;
        let key = self.molecule.preset_key(molecule);
        let surface = match &syn.surface {
            Some(s) => s.clone(),
            None => Surface::preset(&key).ok_or_else(|| {
                QelmError::Config(format!("no default surface for {key:?}; set data.synthetic.surface"))
            })?,
        };
        let ranges = match &syn.ranges {
            Some(r) => r.clone(),
            None => SamplingRanges::preset(&key).ok_or_else(|| {
                QelmError::Config(format!("no default ranges for {key:?}; set data.synthetic.ranges"))
            })?,
        };
        ranges.validate()?;
        if ranges.0.len() != molecule.n_coords() {
            return Err(QelmError::Config(format!(
                "{} sampling ranges for {} coordinates",
                ranges.0.len(),
                molecule.n_coords()
            )));
        }
        if syn.count == 0 {
            return Err(QelmError::Config("data.synthetic.count must be positive".into()));
        }
        generate_synthetic(molecule, &surface, &ranges, syn.count, self.seeds.data_seed())
    }

    fn dataset(&self, molecule: &MoleculeSpec) -> Result<Dataset> {
        match &self.data.path {
            Some(path) => load_dataset(path, molecule),
            None => self.synthetic_dataset(molecule),
        }
    }

    fn m_train(&self) -> Result<usize> {
        self.split
            .m_train
            .ok_or_else(|| QelmError::Config("split.m_train is required".into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "qelm", version, about = "Quantum extreme learning machine experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seeds.master`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample geometries and label them with the synthetic surface.
    GenData,
    /// Fit the readout on a train split and score the held-out rest.
    Train,
    /// Grid over qubit counts, training sizes and reservoir seeds.
    Sweep,
    /// Apply a saved model to a geometry file.
    Predict,
    /// Fourier spectrum of the encoding kernel along each axis.
    Spectrum,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| QelmError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seeds.master = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    fs::create_dir_all(&config.output_dir).map_err(|e| QelmError::io(&config.output_dir, e))?;
    match cli.command {
        Command::GenData => cmd_gen_data(&config),
        Command::Train => cmd_train(&config),
        Command::Sweep => cmd_sweep(&config),
        Command::Predict => cmd_predict(&config),
        Command::Spectrum => cmd_spectrum(&config),
    }
}

fn out_file(config: &ExperimentConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_gen_data(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let molecule = config.molecule.resolve()?;
    let dataset = config.synthetic_dataset(&molecule)?;
    let path = out_file(config, "dataset.csv");
    save_dataset(&dataset, &path)?;
    Ok(vec![path])
}

fn metrics_rows(
    molecule: &str,
    n_qubits: usize,
    m_train: usize,
    shots: Shots,
    seed: u64,
    metrics: &Metrics,
    depth: usize,
) -> Vec<Vec<String>> {
    (0..metrics.labels.len())
        .map(|k| {
            vec![
                molecule.to_string(),
                n_qubits.to_string(),
                m_train.to_string(),
                shots.to_string(),
                seed.to_string(),
                metrics.labels[k].clone(),
                metrics.rmse[k].to_string(),
                metrics.sqrt_var[k].to_string(),
                opt(metrics.ratio[k]),
                depth.to_string(),
            ]
        })
        .collect()
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_io(path);
    w.write_record(header).map_err(&err)?;
    for row in rows {
        w.write_record(row).map_err(&err)?;
    }
    w.flush().map_err(|e| QelmError::io(path, e))
}

fn metrics_header() -> Vec<String> {
    METRICS_HEADER.iter().map(|s| s.to_string()).collect()
}

/// Coordinates, then `pred_<t>`, and `ref_<t>`/`res_<t>` when references exist.
fn prediction_rows(
    geometries: &[data::Geometry],
    labels: &[String],
    predictions: &nalgebra::DMatrix<f64>,
    references: Option<&nalgebra::DMatrix<f64>>,
) -> (Vec<String>, Vec<Vec<String>>) {
    let n_coords = geometries.first().map_or(0, |g| g.coords().len());
    let mut header = data::csv_header(n_coords, false);
    header.extend(labels.iter().map(|l| format!("pred_{l}")));
    if references.is_some() {
        header.extend(labels.iter().map(|l| format!("ref_{l}")));
        header.extend(labels.iter().map(|l| format!("res_{l}")));
    }
    let rows = geometries
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let mut row: Vec<String> = g.coords().iter().map(|c| c.to_string()).collect();
            row.extend((0..labels.len()).map(|k| predictions[(k, j)].to_string()));
            if let Some(r) = references {
                row.extend((0..labels.len()).map(|k| r[(k, j)].to_string()));
                row.extend((0..labels.len()).map(|k| (predictions[(k, j)] - r[(k, j)]).to_string()));
            }
            row
        })
        .collect();
    (header, rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| QelmError::Numerical(e.to_string()))?;
    text.push('\n');
    data::write_text(path, &text)
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let molecule = config.molecule.resolve()?;
    let setup = config.setup(&molecule)?;
    let dataset = config.dataset(&molecule)?;
    let (train_set, test_set) = split(&dataset, config.m_train()?, config.seeds.split_seed())?;
    let result = run_on_split(&setup, &train_set, &test_set)?;

    let model_path = out_file(config, "model.json");
    write_json(&model_path, &result.model)?;

    let metrics_path = out_file(config, "metrics.csv");
    let rows = metrics_rows(
        &molecule.name,
        setup.encoding.n_qubits,
        result.m_train,
        setup.plan.shots,
        setup.encoding.seed,
        &result.test_metrics,
        result.depth.native_depth,
    );
    write_rows(&metrics_path, &metrics_header(), &rows)?;

    let fit_path = out_file(config, "train_predictions.csv");
    let y = train_set.targets(setup.mode)?;
    let (header, rows) = prediction_rows(
        &train_set.geometries,
        y.labels(),
        &result.fit.train_predictions,
        Some(y.values()),
    );
    write_rows(&fit_path, &header, &rows)?;

    let train_path = out_file(config, "train.csv");
    save_dataset(&train_set, &train_path)?;
    let test_path = out_file(config, "test.csv");
    save_dataset(&test_set, &test_path)?;
    Ok(vec![model_path, metrics_path, fit_path, train_path, test_path])
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let grid = config
        .sweep
        .as_ref()
        .ok_or_else(|| QelmError::Config("sweep section is required".into()))?;
    let molecule = config.molecule.resolve()?;
    let template = config.setup(&molecule)?;
    for &n in &grid.n_qubits {
        config.encoding.resolve(molecule.n_coords(), 0).and_then(|mut s| {
            s.n_qubits = n;
            s.validate().map_err(|e| QelmError::Config(e.to_string()))
        })?;
    }
    let dataset = config.dataset(&molecule)?;
    let cells = sweep(
        &template,
        &dataset,
        &grid.n_qubits,
        &grid.m_train,
        &grid.seeds,
        config.seeds.split_seed(),
        grid.workers,
    )?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .flat_map(|c| {
            metrics_rows(
                &molecule.name,
                c.n_qubits,
                c.m_train,
                template.plan.shots,
                c.seed,
                &c.metrics,
                c.depth.native_depth,
            )
        })
        .collect();
    let path = out_file(config, "sweep.csv");
    write_rows(&path, &metrics_header(), &rows)?;
    Ok(vec![path])
}

pub fn cmd_predict(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let paths = config
        .predict
        .as_ref()
        .ok_or_else(|| QelmError::Config("predict section is required".into()))?;
    let text = fs::read_to_string(&paths.model).map_err(|e| QelmError::io(&paths.model, e))?;
    let model: TrainedModel = serde_json::from_str(&text).map_err(|e| QelmError::Parse {
        line: e.line() as u64,
        message: format!("{}: {e}", paths.model.display()),
    })?;
    model.reservoir.check_matches(&model.encoding)?;
    if model.encoding.n_coords != model.molecule.n_coords()
        || model.readout.n_outcomes() != 1 << model.encoding.n_qubits
    {
        return Err(QelmError::DimensionMismatch(format!(
            "model file {} is internally inconsistent",
            paths.model.display()
        )));
    }
    let table = read_geometry_table(&paths.geometries, &model.molecule)?;
    if table.geometries.is_empty() {
        return Err(QelmError::InsufficientData(format!(
            "{} has no rows",
            paths.geometries.display()
        )));
    }
    let predictions = model.predict(&table.geometries, PREDICT_STREAM)?;
    let references = table.targets.as_ref().map(|t| {
        let labels = &model.readout.labels;
        let rows: Vec<Vec<f64>> = t
            .iter()
            .map(|(e, f)| match model.mode {
                TargetMode::Joint => std::iter::once(*e).chain(f.iter().copied()).collect(),
                TargetMode::EnergyOnly => vec![*e],
            })
            .collect();
        nalgebra::DMatrix::from_fn(labels.len(), rows.len(), |k, j| rows[j][k])
    });
    let (header, rows) = prediction_rows(
        &table.geometries,
        &model.readout.labels,
        &predictions,
        references.as_ref(),
    );
    let path = out_file(config, "predictions.csv");
    write_rows(&path, &header, &rows)?;
    Ok(vec![path])
}

pub fn cmd_spectrum(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let molecule = config.molecule.resolve()?;
    let encoding = config
        .encoding
        .resolve(molecule.n_coords(), config.seeds.reservoir_seed())?;
    let reservoir = sample_reservoir(&encoding);
    let axes = config
        .spectrum
        .axes
        .clone()
        .unwrap_or_else(|| (0..molecule.n_coords()).collect());
    let mut rows = Vec::new();
    for axis in axes {
        let s = spectrum(
            &encoding,
            &reservoir,
            axis,
            config.spectrum.grid_size,
            config.spectrum.threshold,
        )?;
        for (f, m) in s.frequencies.iter().zip(&s.magnitudes) {
            rows.push(vec![
                encoding.n_qubits.to_string(),
                axis.to_string(),
                f.to_string(),
                m.to_string(),
            ]);
        }
    }
    let header: Vec<String> = ["n_qubits", "axis", "frequency", "magnitude"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let path = out_file(config, "spectrum.csv");
    write_rows(&path, &header, &rows)?;
    Ok(vec![path])
}
