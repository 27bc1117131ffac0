//! Classical simulation of noisy Boson Sampling by low-degree truncation of the
//! output distribution, with the exact, analytic and Monte Carlo oracles used
//! to check it.

pub mod combinatorics;
pub mod distinguishability;
pub mod error;
pub mod gaussian;
pub mod loss;
pub mod marginal;
pub mod matrix;
pub mod outcome;
pub mod permanent;
pub mod rng;
pub mod unitary;
pub mod validation;

pub use error::{Error, Result};
pub use matrix::ComplexMatrix;
pub use num_complex::Complex64;
pub use outcome::{Distribution, OutcomeKey, OutcomeOccupation, OutcomeOrdered, OutcomeUnordered};
pub use rng::RngStream;
pub use unitary::{RescaledInputMatrix, UnitaryMatrix};

use serde::{Deserialize, Serialize};

/// Size and seed shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

/// The three noise models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NoiseSpec {
    GaussianCircuit(gaussian::GaussianNoiseSpec),
    Distinguishability(distinguishability::DistinguishabilitySpec),
    Loss(loss::LossSpec),
}
