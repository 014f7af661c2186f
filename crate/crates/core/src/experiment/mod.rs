//! Paired Monte Carlo validation of the EC approximation and its error exponent.

pub mod config;
mod fit;
pub mod output;
mod paired;
mod validate;

use thiserror::Error;

use crate::covariance::CovarianceError;
use crate::critical_variance::SigmaError;
use crate::ec_heuristic::EcError;
use crate::field_sim::SimError;

pub use config::{ConfigError, ExperimentConfig};
pub use fit::{fit_decay_exponent, qualifies, DecayFit, MIN_FIT_POINTS};
pub use paired::{
    formula_value, level_sums, mean_ec_vs_formula, paired_diff, simulate, ConfiguredSampler,
    EcComparison, LevelSums, PairedDiffEstimate, PairedRun, SimulationRow,
};
pub use validate::{
    eq3_reference_curve, kl_bound_against_estimates, kl_dimension, sigma_for_config,
    validate_theorem, verdict, KlBoundRow, ValidationReport, ValidationSummary, VerdictMode,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "insufficient signal: {qualifying} level(s) with diff_mean > k * se, need {required} \
         (largest usable u: {largest_usable_u:?}); increase n_paths or lower the u grid"
    )]
    InsufficientSignal {
        qualifying: usize,
        required: usize,
        largest_usable_u: Option<f64>,
    },
    #[error("sampler construction failed: {0}")]
    Sampler(#[from] SimError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Sigma(#[from] SigmaError),
    #[error(transparent)]
    Space(#[from] EcError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

impl ExperimentError {
    /// Process exit code: 2 invalid config, 3 insufficient signal, 4 sampler failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Space(_)
            | ExperimentError::Covariance(_) => 2,
            ExperimentError::InsufficientSignal { .. } => 3,
            ExperimentError::Sampler(_) | ExperimentError::Unsupported(_) => 4,
            ExperimentError::Sigma(_) => 1,
        }
    }
}
