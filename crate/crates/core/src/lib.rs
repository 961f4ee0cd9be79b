//! Quantum extreme learning machine for molecular potential energy surfaces.
//!
//! A fixed random encoding circuit maps a molecular geometry to a
//! measurement-probability vector; only a linear readout on top of those
//! probabilities is trained, in closed form.

pub mod cli;
pub mod data;
pub mod encoding;
pub mod error;
pub mod gates;
pub mod kernels;
pub mod measurement;
pub mod rng;
pub mod shiftrule;
pub mod sim;
pub mod training;

pub use error::{QelmError, Result};
