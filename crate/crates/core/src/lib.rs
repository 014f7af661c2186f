//! Expected Euler characteristic approximation to the tail of the supremum of a smooth
//! unit-variance Gaussian field, the critical variance that controls its error, and a
//! seeded Monte Carlo harness that measures that error.

pub mod covariance;
pub mod critical_variance;
pub mod ec_heuristic;
pub mod experiment;
pub mod field_sim;
pub mod optimize;

pub use covariance::{CovarianceError, CovarianceModel, CovarianceSpec, Family, IsotropicModel};
pub use critical_variance::{CriticalVarianceReport, FiniteKlModel, SigmaError};
pub use ec_heuristic::{ec_approximation, EcApproximation, ParameterSpace, Shape};
