//! Kernel `k(x, y) = Tr(rho_x rho_y)` of an encoding and its Fourier content.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_state, rotation_encoding_circuit, EncodingSpec, Reservoir};
use crate::error::{QelmError, Result};
use crate::sim::{overlap, run_from_zero};

/// Argument scale of the squared-cosine kernel of the product Rx encoding:
/// `k(x, y) = prod_i cos^2(s (x_i - y_i))` holds with `s = 1/2`.
pub const ROTATION_KERNEL_SCALE: f64 = 0.5;

pub const DEFAULT_SPECTRUM_THRESHOLD: f64 = 1e-8;

fn check_lengths(x: &[f64], y: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected || y.len() != expected {
        return Err(QelmError::DimensionMismatch(format!(
            "kernel expects {expected} coordinates, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn kernel(x: &[f64], y: &[f64], encoding: &EncodingSpec, reservoir: &Reservoir) -> Result<f64> {
    check_lengths(x, y, encoding.n_coords)?;
    overlap(
        &encode_state(x, encoding, reservoir)?,
        &encode_state(y, encoding, reservoir)?,
    )
}

/// Kernel of the product Rx encoding by state overlap (one qubit per input).
pub fn rotation_kernel(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, x.len())?;
    overlap(
        &run_from_zero(&rotation_encoding_circuit(x)?)?,
        &run_from_zero(&rotation_encoding_circuit(y)?)?,
    )
}

/// `prod_i cos^2(scale * (x_i - y_i))`.
pub fn rotation_kernel_closed_form(x: &[f64], y: &[f64], scale: f64) -> Result<f64> {
    check_lengths(x, y, x.len())?;
    Ok(x.iter().zip(y).map(|(a, b)| (scale * (a - b)).cos().powi(2)).product())
}

/// Picks the argument scale in `{1/2, 1}` that best matches the brute-force
/// rotation kernel over `pairs`; returns `(scale, max abs deviation)`.
pub fn fit_convention_scale(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    for scale in [0.5, 1.0] {
        let mut worst: f64 = 0.0;
        for (x, y) in pairs {
            let brute = rotation_kernel(x, y)?;
            worst = worst.max((brute - rotation_kernel_closed_form(x, y, scale)?).abs());
        }
        if worst < best.1 {
            best = (scale, worst);
        }
    }
    Ok(best)
}

pub fn gram_matrix(points: &[Vec<f64>], encoding: &EncodingSpec, reservoir: &Reservoir) -> Result<DMatrix<f64>> {
    let states = points
        .iter()
        .map(|x| encode_state(x, encoding, reservoir))
        .collect::<Result<Vec<_>>>()?;
    let n = states.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = overlap(&states[i], &states[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Upper bound `2^(2N-1) - 1` on the number of distinct kernel frequencies.
pub fn frequency_count_bound(n_qubits: usize) -> u128 {
    (1u128 << (2 * n_qubits - 1)) - 1
}

/// Fourier content of `k(t e_axis, 0)` along one coordinate axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpectrum {
    pub axis: usize,
    /// Frequencies whose coefficient magnitude passed the threshold, ascending.
    pub frequencies: Vec<i64>,
    /// `|c_n|` for each entry of `frequencies`.
    pub magnitudes: Vec<f64>,
    /// Largest frequency the generator can produce (`N` for `G = 1/2 sum Z`).
    pub max_frequency: usize,
    /// Share of the spectral energy `sum |c_n|^2` sitting above `max_frequency`.
    pub out_of_band_energy: f64,
}

impl KernelSpectrum {
    pub fn nonnegative_count(&self) -> usize {
        self.frequencies.iter().filter(|&&f| f >= 0).count()
    }

    /// Distinct non-zero frequencies, counting `+n` and `-n` once.
    pub fn positive_count(&self) -> usize {
        self.frequencies.iter().filter(|&&f| f > 0).count()
    }

    pub fn within_band(&self) -> bool {
        self.frequencies
            .iter()
            .all(|f| f.unsigned_abs() as usize <= self.max_frequency)
    }
}

/// Samples `k(t e_axis, 0)` on `t = 2 pi j / grid_size` and takes its DFT.
///
/// With the `Rz`-layer generator every kernel frequency is an integer in
/// `[-N, N]`, so the kernel is `2 pi`-periodic and a grid of at least
/// `2N + 1` points resolves it without aliasing.
pub fn spectrum(
    encoding: &EncodingSpec,
    reservoir: &Reservoir,
    axis: usize,
    grid_size: usize,
    threshold: f64,
) -> Result<KernelSpectrum> {
    encoding.validate()?;
    if axis >= encoding.n_coords {
        return Err(QelmError::DimensionMismatch(format!(
            "probe axis {axis} outside {} coordinates",
            encoding.n_coords
        )));
    }
    let max_frequency = encoding.n_qubits;
    if grid_size < 2 * max_frequency + 1 {
        return Err(QelmError::Aliasing {
            grid_size,
            max_frequency,
        });
    }
    let origin = vec![0.0; encoding.n_coords];
    let reference = encode_state(&origin, encoding, reservoir)?;
    let samples = (0..grid_size)
        .into_par_iter()
        .map(|j| {
            let mut x = origin.clone();
            x[axis] = 2.0 * PI * j as f64 / grid_size as f64;
            let state = encode_state(&x, encoding, reservoir)?;
            Ok(Complex64::new(overlap(&state, &reference)?, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut buffer = samples;
    FftPlanner::new().plan_fft_forward(grid_size).process(&mut buffer);
    let coeffs: Vec<(i64, f64)> = buffer
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let freq = if k <= grid_size / 2 {
                k as i64
            } else {
                k as i64 - grid_size as i64
            };
            (freq, c.norm() / grid_size as f64)
        })
        .collect();

    let largest = coeffs.iter().map(|c| c.1).fold(0.0, f64::max);
    let total: f64 = coeffs.iter().map(|c| c.1 * c.1).sum();
    let outside: f64 = coeffs
        .iter()
        .filter(|c| c.0.unsigned_abs() as usize > max_frequency)
        .map(|c| c.1 * c.1)
        .sum();
    let mut kept: Vec<(i64, f64)> = coeffs.into_iter().filter(|c| c.1 > threshold * largest).collect();
    kept.sort_by_key(|c| c.0);
    Ok(KernelSpectrum {
        axis,
        frequencies: kept.iter().map(|c| c.0).collect(),
        magnitudes: kept.iter().map(|c| c.1).collect(),
        max_frequency,
        out_of_band_energy: if total > 0.0 { outside / total } else { 0.0 },
    })
}
