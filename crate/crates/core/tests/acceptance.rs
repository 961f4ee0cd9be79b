//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints its own PASS/FAIL line; the process fails if any criterion does.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;

use qelm::data::{generate_synthetic, split, MorseParams, SamplingRanges, Surface, TargetMode};
use qelm::encoding::{sample_reservoir, EncodingSpec, MoleculeSpec};
use qelm::kernels::{
    fit_convention_scale, frequency_count_bound, rotation_kernel, rotation_kernel_closed_form, spectrum,
    DEFAULT_SPECTRUM_THRESHOLD,
};
use qelm::measurement::{exact_probabilities, sampled_probabilities, DiagonalObservable, ShotPlan};
use qelm::rng::{self, StreamRng};
use qelm::shiftrule::{expectation, shift_rule_derivative, shift_rule_evaluations_per_point, ShiftRuleSpec};
use qelm::sim::{Circuit, GateOp, QuantumState};
use qelm::training::{
    encoding_depth, fit_readout, run_on_split, sweep, train, ProbabilityMatrix, QelmSetup, TargetMatrix,
};

type Outcome = Result<String, String>;

fn uniform(r: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::unit_open(r)
}

fn gaussian(r: &mut StreamRng) -> f64 {
    (-2.0 * rng::unit_open(r).ln()).sqrt() * (2.0 * PI * rng::unit_open(r)).cos()
}

fn lih_dataset() -> qelm::data::Dataset {
    generate_synthetic(
        &MoleculeSpec::lih(),
        &Surface::Morse(MorseParams::default()),
        &SamplingRanges::lih(),
        170,
        2024,
    )
    .expect("synthetic LiH")
}

fn kernel_oracle() -> Outcome {
    let mut r = rng::stream(101);
    let mut fit_pairs = Vec::new();
    for n in 1..=3 {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| uniform(&mut r, -2.0 * PI, 2.0 * PI)).collect();
            let y: Vec<f64> = (0..n).map(|_| uniform(&mut r, -2.0 * PI, 2.0 * PI)).collect();
            fit_pairs.push((x, y));
        }
    }
    let (scale, _) = fit_convention_scale(&fit_pairs).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| uniform(&mut r, -2.0 * PI, 2.0 * PI)).collect();
            let y: Vec<f64> = (0..n).map(|_| uniform(&mut r, -2.0 * PI, 2.0 * PI)).collect();
            let brute = rotation_kernel(&x, &y).map_err(|e| e.to_string())?;
            // Independent closed form, written out here rather than taken from the library.
            let oracle: f64 = x.iter().zip(&y).map(|(a, b)| (scale * (a - b)).cos().powi(2)).product();
            let lib = rotation_kernel_closed_form(&x, &y, scale).map_err(|e| e.to_string())?;
            worst = worst.max((brute - oracle).abs()).max((lib - oracle).abs());
        }
    }
    let detail = format!("fitted scale {scale}, max |k - closed form| = {worst:.2e} over 600 pairs");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spectrum_bound() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for n in 1..=5usize {
        let enc = EncodingSpec::new(n, 2, 40 + n as u64);
        let res = sample_reservoir(&enc);
        for axis in 0..2 {
            let s = spectrum(&enc, &res, axis, 64, DEFAULT_SPECTRUM_THRESHOLD).map_err(|e| e.to_string())?;
            let support = s.frequencies.iter().all(|f| f.unsigned_abs() as usize <= n);
            let bound = frequency_count_bound(n);
            // The bound counts distinct non-trivial frequencies (each +-m pair once).
            let counted = s.positive_count() as u128 <= bound;
            // With zero included the bound is only meaningful from N = 2 on
            // (at N = 1 the frequencies {0, 1} already exceed 2^1 - 1 = 1).
            let with_zero = n < 2 || s.nonnegative_count() as u128 <= bound;
            ok &= support && counted && with_zero && s.out_of_band_energy < 1e-8;
            if axis == 0 {
                notes.push(format!(
                    "N={n}: max|f|={} nonneg={} pos={} bound={bound} oob={:.1e}",
                    s.frequencies.iter().map(|f| f.unsigned_abs()).max().unwrap_or(0),
                    s.nonnegative_count(),
                    s.positive_count(),
                    s.out_of_band_energy
                ));
            }
        }
    }
    let detail = notes.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pseudoinverse_optimality() -> Outcome {
    let mut r = rng::stream(303);
    let mut min_margin = f64::INFINITY;
    let mut worst_normal_eq: f64 = 0.0;
    let shapes = [
        (4, 3),
        (4, 10),
        (8, 5),
        (8, 8),
        (8, 30),
        (16, 12),
        (16, 40),
        (32, 20),
        (2, 9),
        (16, 16),
    ];
    for (problem, &(outcomes, samples)) in shapes.iter().enumerate() {
        let mut p = DMatrix::from_fn(outcomes, samples, |_, _| rng::unit_open(&mut r));
        for mut col in p.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let targets = 1 + problem % 3;
        let y = DMatrix::from_fn(targets, samples, |_, _| gaussian(&mut r));
        let labels = (0..targets).map(|k| format!("t{k}")).collect();
        let map = fit_readout(
            &ProbabilityMatrix::from_matrix(p.clone()),
            &TargetMatrix::new(y.clone(), labels).map_err(|e| e.to_string())?,
            1e-12,
            false,
        )
        .map_err(|e| e.to_string())?;
        let w = map.weight_matrix();
        let base = (&y - &w * &p).norm();
        // Least-squares optimality: the residual is orthogonal to the row space of P.
        worst_normal_eq = worst_normal_eq.max(((&y - &w * &p) * p.transpose()).norm());
        for _ in 0..100 {
            let mut delta = DMatrix::from_fn(targets, outcomes, |_, _| gaussian(&mut r));
            delta *= 1e-3 / delta.norm();
            let perturbed = (&y - (&w + delta) * &p).norm();
            min_margin = min_margin.min(perturbed - base);
        }
    }
    let detail =
        format!("min(perturbed - fitted residual) = {min_margin:.3e}, max |(Y - WP)P^T| = {worst_normal_eq:.2e}");
    if min_margin >= -1e-12 && worst_normal_eq < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random circuit plus where to insert the parameterised rotation: `(n, ops, position, qubit, axis)`.
fn random_single_parameter_circuit(r: &mut StreamRng) -> (usize, Vec<GateOp>, usize, usize, usize) {
    let n = 1 + rng::below(r, 4);
    let len = 4 + rng::below(r, 12);
    let mut ops = Vec::with_capacity(len);
    for _ in 0..len {
        let q = rng::below(r, n);
        let angle = uniform(r, -PI, PI);
        let op = match rng::below(r, if n > 1 { 6 } else { 5 }) {
            0 => GateOp::rz(q, angle),
            1 => GateOp::ry(q, angle),
            2 => GateOp::rx(q, angle),
            3 => GateOp::sqrt_x(q),
            4 => GateOp::x(q),
            _ => {
                let other = (q + 1 + rng::below(r, n - 1)) % n;
                GateOp::ecr(q, other)
            }
        };
        ops.push(op);
    }
    let at = rng::below(r, len + 1);
    let q = rng::below(r, n);
    let axis = rng::below(r, 3);
    (n, ops, at, q, axis)
}

fn shift_rule_exactness() -> Outcome {
    let mut r = rng::stream(404);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, ops, at, q, axis) = random_single_parameter_circuit(&mut r);
        let circuit_at = |theta: f64| {
            let mut all = ops.clone();
            let g = match axis {
                0 => GateOp::rz(q, theta),
                1 => GateOp::ry(q, theta),
                _ => GateOp::rx(q, theta),
            };
            all.insert(at, g);
            Circuit::from_ops(n, all)
        };
        let obs = DiagonalObservable((0..1usize << n).map(|_| gaussian(&mut r)).collect());
        let theta = uniform(&mut r, -PI, PI);
        let f = |t: f64| expectation(circuit_at, &obs, t);
        let shift = shift_rule_derivative(f, theta, &ShiftRuleSpec::PAULI_ROTATION).map_err(|e| e.to_string())?;
        let central = |h: f64| (f(theta + h).unwrap() - f(theta - h).unwrap()) / (2.0 * h);
        let h = 1e-2;
        // One Richardson step removes the h^2 term of the central difference.
        let richardson = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        worst = worst.max((shift - richardson).abs());
    }
    let detail = format!("max |shift rule - Richardson FD| = {worst:.2e} over 50 circuits");
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn shot_noise_scaling() -> Outcome {
    let mut r = rng::stream(505);
    let states: Vec<QuantumState> = (0..50)
        .map(|_| {
            let amps: Vec<Complex64> = (0..16)
                .map(|_| Complex64::new(gaussian(&mut r), gaussian(&mut r)))
                .collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            QuantumState::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
        })
        .collect();
    let shot_counts = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let mut points = Vec::new();
    for (si, &shots) in shot_counts.iter().enumerate() {
        let mut total = 0.0;
        for (k, state) in states.iter().enumerate() {
            let exact = exact_probabilities(state);
            let seed = rng::derive_seed(si as u64, k as u64);
            let est = sampled_probabilities(state, shots, seed).map_err(|e| e.to_string())?;
            let err: f64 = exact
                .as_slice()
                .iter()
                .zip(est.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            total += err;
        }
        points.push(((shots as f64).ln(), (total / states.len() as f64).ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let detail = format!("log-log slope {slope:.4}");
    if (-0.6..=-0.4).contains(&slope) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn plateau() -> Outcome {
    let ds = lih_dataset();
    let setup = QelmSetup::new(EncodingSpec::new(4, 1, 0), ShotPlan::exact());
    let seeds = [1u64, 2, 3, 4, 5];
    let cells = sweep(&setup, &ds, &[4], &[8, 32, 64], &seeds, 17, 4).map_err(|e| e.to_string())?;
    let rmse_at = |m: usize| {
        median(
            cells
                .iter()
                .filter(|c| c.m_train == m)
                .map(|c| c.metrics.rmse[c.metrics.index_of("E").unwrap()])
                .collect(),
        )
    };
    let (r8, r32, r64) = (rmse_at(8), rmse_at(32), rmse_at(64));
    let early = (r8 - r32) / r8;
    let late = (r32 - r64) / r32;
    let detail = format!(
        "median RMSE(E) M=8: {r8:.3e}, M=32: {r32:.3e}, M=64: {r64:.3e}; improvement 8->32 {:.1}%, 32->64 {:.1}%",
        100.0 * early,
        100.0 * late
    );
    if late < 0.5 && early > late {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn end_to_end() -> Outcome {
    let ds = lih_dataset();
    let (train_set, test_set) = split(&ds, 50, 17).map_err(|e| e.to_string())?;
    let exact = run_on_split(
        &QelmSetup::new(EncodingSpec::new(5, 1, 3), ShotPlan::exact()),
        &train_set,
        &test_set,
    )
    .map_err(|e| e.to_string())?;
    let shots = run_on_split(
        &QelmSetup::new(EncodingSpec::new(5, 1, 3), ShotPlan::finite(40_000, 99)),
        &train_set,
        &test_set,
    )
    .map_err(|e| e.to_string())?;
    let e = exact.test_metrics.index_of("E").unwrap();
    let ratio = exact.test_metrics.ratio[e].unwrap_or(f64::INFINITY);
    let (rmse_exact, rmse_shots) = (exact.test_metrics.rmse[e], shots.test_metrics.rmse[e]);
    let detail = format!("statevector RMSE(E) {rmse_exact:.3e}, ratio {ratio:.3e}; 4e4 shots RMSE(E) {rmse_shots:.3e}");
    if ratio <= 1e-2 && rmse_shots > rmse_exact {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn force_readout_cost() -> Outcome {
    let ds = lih_dataset().head(60);
    let mut counts = Vec::new();
    for plan in [ShotPlan::exact(), ShotPlan::finite(1000, 5)] {
        for mode in [TargetMode::EnergyOnly, TargetMode::Joint] {
            let mut setup = QelmSetup::new(EncodingSpec::new(4, 1, 8), plan);
            setup.mode = mode;
            let (model, fit) = train(&setup, &ds).map_err(|e| e.to_string())?;
            counts.push((plan.shots.to_string(), model.readout.labels.len(), fit.evaluations));
        }
    }
    let same = counts.chunks(2).all(|c| c[0].2 == c[1].2 && c[0].2 == ds.len() as u64);
    let detail = format!(
        "circuit runs (shots, targets, runs): {counts:?}; shift-rule forces would need {} per geometry",
        shift_rule_evaluations_per_point(1, 1)
    );
    if same {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qelm"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut listings = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        fs::create_dir_all(&dir).unwrap();
        let data = dir.join("data");
        let config = dir.join("config.toml");
        fs::write(
            &config,
            format!(
                r#"output_dir = "{out}"

[seeds]
master = 77

[molecule]
preset = "h2o"

[encoding]
n_qubits = 4

[shots]
count = 2000

[data.synthetic]
count = 60

[split]
m_train = 30

[sweep]
n_qubits = [2, 3, 4]
m_train = [10, 30]
seeds = [1, 2]
workers = 3

[spectrum]
grid_size = 32

[predict]
model = "{model}"
geometries = "{geoms}"
"#,
                out = dir.join("out").display(),
                model = dir.join("out/model.json").display(),
                geoms = data.join("dataset.csv").display(),
            ),
        )
        .unwrap();
        let c = config.to_str().unwrap();
        run_cli(&["gen-data", "--config", c, "--out", data.to_str().unwrap()])?;
        for cmd in ["train", "sweep", "predict", "spectrum"] {
            run_cli(&[cmd, "--config", c])?;
        }
        listings.push((files_in(&data), files_in(&dir.join("out"))));
    }
    let names: Vec<String> = listings[0].1.iter().map(|f| f.0.clone()).collect();
    let detail = format!("outputs compared: dataset.csv, {}", names.join(", "));
    if listings[0] == listings[1] && names.len() >= 8 {
        Ok(detail)
    } else {
        Err(format!("outputs differ between runs ({detail})"))
    }
}

fn depth_sanity() -> Outcome {
    let mut depths = Vec::new();
    for seed in [3u64, 11, 12345] {
        let enc = EncodingSpec::new(4, MoleculeSpec::lih().n_coords(), seed);
        depths.push(
            encoding_depth(&enc, &sample_reservoir(&enc))
                .map_err(|e| e.to_string())?
                .native_depth,
        );
    }
    let detail = format!("native depth N=4 LiH: {depths:?}");
    if depths.iter().all(|d| (13..=52).contains(d)) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("kernel oracle", kernel_oracle, Duration::from_secs(5)),
        ("spectrum bound", spectrum_bound, Duration::from_secs(30)),
        (
            "pseudoinverse optimality",
            pseudoinverse_optimality,
            Duration::from_secs(10),
        ),
        ("shift-rule exactness", shift_rule_exactness, Duration::from_secs(10)),
        ("shot-noise scaling", shot_noise_scaling, Duration::from_secs(60)),
        ("training-size plateau", plateau, Duration::from_secs(120)),
        ("end-to-end accuracy", end_to_end, Duration::from_secs(300)),
        (
            "force readout at no extra cost",
            force_readout_cost,
            Duration::from_secs(60),
        ),
        ("CLI reproducibility", reproducibility, Duration::from_secs(300)),
        ("depth sanity", depth_sanity, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<32} {} [{:.2}s / {}s] {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
