//! Weighted least-squares fit of `log Diff(u)` against `u^2/2`.

use serde::{Deserialize, Serialize};

use super::paired::PairedDiffEstimate;
use super::ExperimentError;

/// Relative SE floor; keeps weights finite for noise-free inputs.
const MIN_REL_SE: f64 = 1e-12;
pub const MIN_FIT_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log Diff` in `u^2/2`; the bound predicts `slope <= -(1 + 1/sigma_c^2)`.
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub points_used: usize,
    pub levels_used: Vec<f64>,
}

/// Whether an estimate carries enough signal to enter the fit.
pub fn qualifies(e: &PairedDiffEstimate, min_signal_k: f64) -> bool {
    e.diff_mean > 0.0 && e.diff_se.is_finite() && e.diff_mean > min_signal_k * e.diff_se
}

/// Fits `log diff_mean = a + slope * u^2/2` with delta-method weights `(mean/se)^2`.
///
/// Only points with `diff_mean > min_signal_k * diff_se` are used, and at least
/// [`MIN_FIT_POINTS`] of them are required. The slope SE treats the weights as known
/// inverse variances.
pub fn fit_decay_exponent(
    estimates: &[PairedDiffEstimate],
    min_signal_k: f64,
) -> Result<DecayFit, ExperimentError> {
    let used: Vec<&PairedDiffEstimate> = estimates
        .iter()
        .filter(|e| qualifies(e, min_signal_k))
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(ExperimentError::InsufficientSignal {
            qualifying: used.len(),
            required: MIN_FIT_POINTS,
            largest_usable_u: used.iter().map(|e| e.u).reduce(f64::max),
        });
    }
    let points: Vec<(f64, f64, f64)> = used
        .iter()
        .map(|e| {
            let rel = (e.diff_se / e.diff_mean).max(MIN_REL_SE);
            (0.5 * e.u * e.u, e.diff_mean.ln(), 1.0 / (rel * rel))
        })
        .collect();
    let w_sum: f64 = points.iter().map(|p| p.2).sum();
    let x_bar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / w_sum;
    let y_bar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / w_sum;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - x_bar).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - x_bar) * (p.1 - y_bar))
        .sum();
    if !(sxx > 0.0) {
        return Err(ExperimentError::InsufficientSignal {
            qualifying: used.len(),
            required: MIN_FIT_POINTS,
            largest_usable_u: used.iter().map(|e| e.u).reduce(f64::max),
        });
    }
    let slope = sxy / sxx;
    Ok(DecayFit {
        slope,
        slope_se: (1.0 / sxx).sqrt(),
        intercept: y_bar - slope * x_bar,
        points_used: used.len(),
        levels_used: used.iter().map(|e| e.u).collect(),
    })
}
