//! Computational-basis measurement: exact outcome probabilities and
//! finite-shot estimates.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{QelmError, Result};
use crate::rng;
use crate::sim::{Circuit, QuantumState};

/// Outcome distribution over the 2^N basis states (little-endian labels).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(QelmError::Domain(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        Ok(ProbVector(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn exact_probabilities(state: &QuantumState) -> ProbVector {
    ProbVector(state.amplitudes().iter().map(|a| a.norm_sqr()).collect())
}

/// Draws `shots` outcomes by inverse CDF and returns relative frequencies.
pub fn sampled_probabilities(state: &QuantumState, shots: u64, seed: u64) -> Result<ProbVector> {
    if shots == 0 {
        return Err(QelmError::Domain("shot count must be at least 1".into()));
    }
    let exact = exact_probabilities(state);
    let counts = sample_counts(exact.as_slice(), shots, seed);
    Ok(ProbVector(
        counts.into_iter().map(|c| c as f64 / shots as f64).collect(),
    ))
}

/// Multinomial outcome counts for `probs` (normalized internally).
pub fn sample_counts(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    // Outcomes past the last non-zero probability are unreachable.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut counts = vec![0u64; probs.len()];
    let mut r = rng::stream(seed);
    for _ in 0..shots {
        let u = rng::unit_closed_open(&mut r) * total;
        let k = cdf.partition_point(|&c| c <= u).min(last);
        counts[k] += 1;
    }
    counts
}

/// Number of repetitions per circuit; `Exact` means infinite statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shots {
    Exact,
    Finite(u64),
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Exact => write!(f, "inf"),
            Shots::Finite(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Shots {
    type Err = QelmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "exact" | "statevector" => Ok(Shots::Exact),
            other => match other.parse::<u64>() {
                Ok(0) | Err(_) => Err(QelmError::Config(format!(
                    "shots must be a positive integer or \"inf\", got {other:?}"
                ))),
                Ok(n) => Ok(Shots::Finite(n)),
            },
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Exact => serializer.serialize_str("inf"),
            Shots::Finite(n) => serializer.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Word(String),
        }
        let parsed = match Repr::deserialize(deserializer)? {
            Repr::Count(n) => Shots::from_str(&n.to_string()),
            Repr::Word(w) => Shots::from_str(&w),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub shots: Shots,
    pub seed: u64,
}

impl ShotPlan {
    pub fn exact() -> Self {
        ShotPlan {
            shots: Shots::Exact,
            seed: 0,
        }
    }

    pub fn finite(shots: u64, seed: u64) -> Self {
        ShotPlan {
            shots: Shots::Finite(shots),
            seed,
        }
    }

    /// Seed for geometry `index` of sampling stream `stream`
    /// (training, test, prediction use different streams).
    pub fn seed_for(&self, stream: u64, index: u64) -> u64 {
        rng::derive_seed(rng::derive_seed(self.seed, stream), index)
    }

    /// Probabilities of `state` under this plan for the given stream slot.
    pub fn probabilities(&self, state: &QuantumState, stream: u64, index: u64) -> Result<ProbVector> {
        match self.shots {
            Shots::Exact => Ok(exact_probabilities(state)),
            Shots::Finite(n) => sampled_probabilities(state, n, self.seed_for(stream, index)),
        }
    }
}

/// Runs circuits from `|0...0>` and counts how many were executed.
///
/// The counter is the number of quantum-circuit evaluations a hardware run
/// would need (one per circuit, each repeated `shots` times).
#[derive(Debug)]
pub struct Executor {
    plan: ShotPlan,
    evaluations: AtomicU64,
}

impl Executor {
    pub fn new(plan: ShotPlan) -> Self {
        Executor {
            plan,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn plan(&self) -> &ShotPlan {
        &self.plan
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn state(&self, circuit: &Circuit) -> Result<QuantumState> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        crate::sim::run_from_zero(circuit)
    }

    pub fn run(&self, circuit: &Circuit, stream: u64, index: u64) -> Result<ProbVector> {
        let state = self.state(circuit)?;
        self.plan.probabilities(&state, stream, index)
    }
}

/// Observable diagonal in the computational basis, stored as its eigenvalues
/// indexed by outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalObservable(pub Vec<f64>);

impl DiagonalObservable {
    pub fn identity(n_qubits: usize) -> Self {
        DiagonalObservable(vec![1.0; 1 << n_qubits])
    }

    /// Pauli Z on `qubit`: +1 when the bit is 0, -1 otherwise.
    pub fn pauli_z(n_qubits: usize, qubit: usize) -> Self {
        DiagonalObservable(
            (0..1usize << n_qubits)
                .map(|i| if i >> qubit & 1 == 0 { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.0
    }

    /// `sum_a o_a p_a`.
    pub fn expectation_from(&self, probs: &ProbVector) -> Result<f64> {
        if probs.len() != self.0.len() {
            return Err(QelmError::DimensionMismatch(format!(
                "observable of size {} against {} outcomes",
                self.0.len(),
                probs.len()
            )));
        }
        Ok(self.0.iter().zip(probs.as_slice()).map(|(o, p)| o * p).sum())
    }

    /// `<psi|O|psi>` computed from amplitudes.
    pub fn expectation(&self, state: &QuantumState) -> Result<f64> {
        self.expectation_from(&exact_probabilities(state))
    }
}
