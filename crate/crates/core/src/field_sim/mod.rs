//! Gaussian field simulation on grids and per-realization excursion statistics.

mod excursion;
mod sampler1d;
mod sampler2d;
mod stream;

use thiserror::Error;

use crate::covariance::CovarianceError;

pub use excursion::{excursion_ec_1d, excursion_ec_2d, sup_on_grid};
pub use sampler1d::{GridSampler1D, MAX_CLAMPED_MASS, TOL_PSD};
pub use sampler2d::GridSampler2D;
pub use stream::{
    fold_paths, sample, FieldSampler, Realization, SampleStream, SeedLineage, CHUNK_SIZE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(
        "circulant embedding failed: clamped mass {clamped_mass:e} of total (min eigenvalue \
         {min_eigenvalue:e}, max {max_eigenvalue:e}, embedding size {embedding_size}, pad {pad_factor})"
    )]
    Embedding {
        clamped_mass: f64,
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        embedding_size: usize,
        pad_factor: usize,
    },
    #[error("embedded covariance differs from the target by {error:e} at lag index {lag}")]
    CovarianceMismatch { lag: usize, error: f64 },
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}
