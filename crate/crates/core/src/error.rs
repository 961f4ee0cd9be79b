use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QelmError>;

#[derive(Debug, Error)]
pub enum QelmError {
    #[error("qubit count {0} outside supported range 1..={max}", max = crate::sim::MAX_QUBITS)]
    Size(usize),

    #[error("invalid qubit index {index} for a {n_qubits}-qubit register")]
    Index { index: usize, n_qubits: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("grid of {grid_size} points aliases frequencies up to {max_frequency} (need at least {})", 2 * .max_frequency + 1)]
    Aliasing { grid_size: usize, max_frequency: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QelmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QelmError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            QelmError::Config(_) | QelmError::Unsupported(_) => 1,
            QelmError::Numerical(_) | QelmError::Aliasing { .. } => 3,
            _ => 2,
        }
    }
}
