//! Stationary covariance models with closed-form derivatives.
//!
//! Every model is a closed-form family evaluated at `t / time_scale`. The
//! time scale starts at 1 and is changed by [`CovarianceModel::normalize_second_moment`]
//! (which makes `-R''(0) = 1`) or by [`CovarianceModel::rescale_time`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ec_heuristic::hermite;

/// Tolerance on `R'(t)` used by the monotonicity scan.
pub const TOL_MONO: f64 = 1e-12;

/// Highest derivative order with an analytic implementation.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("derivative order {0} is not supported (max {MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("invalid covariance parameters: {0}")]
    InvalidParameters(String),
    #[error("degenerate model: -R''(0) = {0} is not positive")]
    Degenerate(f64),
    #[error("covariance exceeds 1 in absolute value at t = {t}: R = {value}")]
    NotBounded { t: f64, value: f64 },
}

/// Closed-form covariance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `R(t) = exp(-t^2 / (2 l^2))`.
    SquaredExponential { length_scale: f64 },
    /// `R(t) = sum_i a_i cos(w_i t)` with `a` a convex combination.
    CosineMixture {
        weights: Vec<f64>,
        frequencies: Vec<f64>,
    },
    /// `R(t) = 1 - r^2 + r^2 cos t`, the covariance of a latitude circle on `S^2`.
    LatitudeCircle { radius: f64 },
}

impl Family {
    fn validate(&self) -> Result<(), CovarianceError> {
        let bad = |msg: String| Err(CovarianceError::InvalidParameters(msg));
        match self {
            Family::SquaredExponential { length_scale } => {
                if !(length_scale.is_finite() && *length_scale > 0.0) {
                    return bad(format!("length scale must be positive, got {length_scale}"));
                }
            }
            Family::CosineMixture {
                weights,
                frequencies,
            } => {
                if weights.is_empty() || weights.len() != frequencies.len() {
                    return bad(format!(
                        "need matching non-empty weights/frequencies, got {} and {}",
                        weights.len(),
                        frequencies.len()
                    ));
                }
                if weights.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return bad("weights must be nonnegative".into());
                }
                if frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return bad("frequencies must be positive".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("weights must sum to 1, got {total}"));
                }
            }
            Family::LatitudeCircle { radius } => {
                if !(radius.is_finite() && *radius > 0.0 && *radius < 1.0) {
                    return bad(format!("radius must lie in (0, 1), got {radius}"));
                }
            }
        }
        Ok(())
    }

    /// Length over which the construction-time bound check scans.
    fn scan_length(&self) -> f64 {
        match self {
            Family::SquaredExponential { length_scale } => 10.0 * length_scale,
            Family::CosineMixture { frequencies, .. } => {
                let w_min = frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
                4.0 * PI / w_min
            }
            Family::LatitudeCircle { .. } => 2.0 * PI,
        }
    }

    fn one_minus(&self, x: f64) -> f64 {
        match self {
            Family::SquaredExponential { length_scale } => {
                let z = x / length_scale;
                -(-0.5 * z * z).exp_m1()
            }
            Family::CosineMixture {
                weights,
                frequencies,
            } => weights
                .iter()
                .zip(frequencies)
                .map(|(a, w)| {
                    let s = (0.5 * w * x).sin();
                    2.0 * a * s * s
                })
                .sum(),
            Family::LatitudeCircle { radius } => {
                let s = (0.5 * x.rem_euclid(2.0 * PI)).sin();
                2.0 * radius * radius * s * s
            }
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            Family::SquaredExponential { length_scale } => {
                let z = x / length_scale;
                (-0.5 * z * z).exp()
            }
            _ => 1.0 - self.one_minus(x),
        }
    }

    fn derivative(&self, x: f64, order: usize) -> f64 {
        if order == 0 {
            return self.value(x);
        }
        match self {
            Family::SquaredExponential { length_scale } => {
                // d^k/dz^k exp(-z^2/2) = (-1)^k He_k(z) exp(-z^2/2)
                let z = x / length_scale;
                let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * hermite(order, z) * (-0.5 * z * z).exp() / length_scale.powi(order as i32)
            }
            Family::CosineMixture {
                weights,
                frequencies,
            } => weights
                .iter()
                .zip(frequencies)
                .map(|(a, w)| a * w.powi(order as i32) * cos_derivative(order, w * x))
                .sum(),
            Family::LatitudeCircle { radius } => {
                radius * radius * cos_derivative(order, x.rem_euclid(2.0 * PI))
            }
        }
    }

    fn period(&self) -> Option<f64> {
        match self {
            Family::SquaredExponential { .. } => None,
            Family::CosineMixture { frequencies, .. } => {
                let base = frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
                let harmonic = frequencies.iter().all(|w| {
                    let ratio = w / base;
                    (ratio - ratio.round()).abs() <= 1e-9 * ratio
                });
                harmonic.then(|| 2.0 * PI / base)
            }
            Family::LatitudeCircle { .. } => Some(2.0 * PI),
        }
    }
}

/// k-th derivative of `cos` at `y`.
fn cos_derivative(order: usize, y: f64) -> f64 {
    match order % 4 {
        0 => y.cos(),
        1 => -y.sin(),
        2 => -y.cos(),
        _ => y.sin(),
    }
}

/// A unit-variance stationary covariance `R(t) = family(t / time_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    family: Family,
    time_scale: f64,
    normalized: bool,
}

impl CovarianceModel {
    pub fn new(family: Family) -> Result<Self, CovarianceError> {
        family.validate()?;
        let model = CovarianceModel {
            family,
            time_scale: 1.0,
            normalized: false,
        };
        model.check_bounded()?;
        let normalized = (model.second_spectral_moment() - 1.0).abs() <= 1e-12;
        Ok(CovarianceModel {
            normalized,
            ..model
        })
    }

    pub fn squared_exponential(length_scale: f64) -> Result<Self, CovarianceError> {
        Self::new(Family::SquaredExponential { length_scale })
    }

    pub fn cosine_mixture(
        weights: Vec<f64>,
        frequencies: Vec<f64>,
    ) -> Result<Self, CovarianceError> {
        Self::new(Family::CosineMixture {
            weights,
            frequencies,
        })
    }

    pub fn latitude_circle(radius: f64) -> Result<Self, CovarianceError> {
        Self::new(Family::LatitudeCircle { radius })
    }

    fn check_bounded(&self) -> Result<(), CovarianceError> {
        let length = self.family.scan_length() * self.time_scale;
        let n = 2000;
        for k in 0..=n {
            let t = length * k as f64 / n as f64;
            let value = self.evaluate(t);
            if value.abs() > 1.0 + 1e-12 {
                return Err(CovarianceError::NotBounded { t, value });
            }
        }
        Ok(())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Factor `s` such that `R(t) = family(t / s)`. After normalization this is `sqrt(lambda_2)`
    /// of the original model.
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `R(t)`. Latitude circles are reduced modulo their period.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.family.value(t / self.time_scale)
    }

    /// `1 - R(t)` without cancellation near `t = 0`.
    pub fn one_minus(&self, t: f64) -> f64 {
        self.family.one_minus(t / self.time_scale)
    }

    /// Exact analytic derivative of order `0..=4`.
    pub fn derivative(&self, t: f64, order: usize) -> Result<f64, CovarianceError> {
        if order > MAX_ORDER {
            return Err(CovarianceError::UnsupportedOrder(order));
        }
        Ok(self.derivative_unchecked(t, order))
    }

    pub(crate) fn derivative_unchecked(&self, t: f64, order: usize) -> f64 {
        self.family.derivative(t / self.time_scale, order) / self.time_scale.powi(order as i32)
    }

    /// `1 - R(t)^2 - R'(t)^2`, the residual variance of `f(t)` after regressing on
    /// `f(0)` and `f'(0)` when `-R''(0) = 1`.
    ///
    /// Cosine mixtures use a pairwise product-to-sum form, which is exactly zero for a
    /// single normalized frequency instead of a difference of two nearly equal terms.
    pub fn regression_residual(&self, t: f64) -> f64 {
        match &self.family {
            Family::CosineMixture {
                weights,
                frequencies,
            } => {
                let mut total = 0.0;
                for (ai, wi) in weights.iter().zip(frequencies) {
                    let vi = wi / self.time_scale;
                    for (aj, wj) in weights.iter().zip(frequencies) {
                        let vj = wj / self.time_scale;
                        let minus = (0.5 * (vi - vj) * t).sin();
                        let plus = (0.5 * (vi + vj) * t).sin();
                        total += ai
                            * aj
                            * ((1.0 + vi * vj) * minus * minus + (1.0 - vi * vj) * plus * plus);
                    }
                }
                total
            }
            _ => {
                let om = self.one_minus(t);
                let slope = self.derivative_unchecked(t, 1);
                om * (2.0 - om) - slope * slope
            }
        }
    }

    /// `lambda_2 = -R''(0) = Var(f'(t))`.
    pub fn second_spectral_moment(&self) -> f64 {
        -self.derivative_unchecked(0.0, 2)
    }

    /// `R''''(0)`.
    pub fn fourth_spectral_moment(&self) -> f64 {
        self.derivative_unchecked(0.0, 4)
    }

    /// Returns `R(t / sqrt(lambda_2))`, whose second spectral moment is 1.
    ///
    /// A model that is already normalized is returned unchanged, so the operation is idempotent.
    pub fn normalize_second_moment(&self) -> Result<CovarianceModel, CovarianceError> {
        if self.normalized {
            return Ok(self.clone());
        }
        let lambda2 = self.second_spectral_moment();
        if !(lambda2 > 0.0) {
            return Err(CovarianceError::Degenerate(lambda2));
        }
        Ok(CovarianceModel {
            family: self.family.clone(),
            time_scale: self.time_scale * lambda2.sqrt(),
            normalized: true,
        })
    }

    /// Returns `R(t / s)`.
    pub fn rescale_time(&self, s: f64) -> Result<CovarianceModel, CovarianceError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(CovarianceError::InvalidParameters(format!(
                "time rescaling factor must be positive, got {s}"
            )));
        }
        let time_scale = self.time_scale * s;
        let mut model = CovarianceModel {
            family: self.family.clone(),
            time_scale,
            normalized: false,
        };
        model.normalized = (model.second_spectral_moment() - 1.0).abs() <= 1e-12;
        Ok(model)
    }

    /// True iff `R'(t_k) <= TOL_MONO` on the grid `t_k = k t_max / grid_n`, `k = 1..=grid_n`.
    /// Grids coarser than 1000 points are refined to 1000.
    pub fn is_monotone_nonincreasing(&self, t_max: f64, grid_n: usize) -> bool {
        let grid_n = grid_n.max(1000);
        (1..=grid_n).all(|k| {
            let t = t_max * k as f64 / grid_n as f64;
            self.derivative_unchecked(t, 1) <= TOL_MONO
        })
    }

    /// Period of `R` when it is periodic with a known fundamental period.
    pub fn period(&self) -> Option<f64> {
        self.family.period().map(|p| p * self.time_scale)
    }
}

/// Isotropic field on `R^m` with covariance `R(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicModel {
    radial: CovarianceModel,
    dimension: usize,
    monotone: bool,
}

impl IsotropicModel {
    /// Scans `R'` for monotonicity on `(0, 20 / sqrt(lambda_2)]`.
    pub fn new(radial: CovarianceModel, dimension: usize) -> Result<Self, CovarianceError> {
        let range = 20.0 / radial.second_spectral_moment().sqrt();
        Self::with_scan_range(radial, dimension, range)
    }

    pub fn with_scan_range(
        radial: CovarianceModel,
        dimension: usize,
        scan_range: f64,
    ) -> Result<Self, CovarianceError> {
        if dimension == 0 {
            return Err(CovarianceError::InvalidParameters(
                "isotropic dimension must be at least 1".into(),
            ));
        }
        let monotone = radial.is_monotone_nonincreasing(scan_range, 20_000);
        Ok(IsotropicModel {
            radial,
            dimension,
            monotone,
        })
    }

    pub fn radial(&self) -> &CovarianceModel {
        &self.radial
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Variance of each partial derivative, `-R''(0)`.
    pub fn derivative_variance(&self) -> f64 {
        self.radial.second_spectral_moment()
    }

    /// Spectral density `S(w)` with `R(|x|) = integral S(w) e^{i<w,x>} dw`, available for the
    /// squared exponential family only.
    pub fn spectral_density(&self, omega_norm: f64) -> Option<f64> {
        match self.radial.family {
            Family::SquaredExponential { length_scale } => {
                let l = length_scale * self.radial.time_scale;
                let m = self.dimension as i32;
                let norm = (l * l / (2.0 * PI)).powf(0.5 * m as f64);
                Some(norm * (-0.5 * l * l * omega_norm * omega_norm).exp())
            }
            _ => None,
        }
    }
}

/// Covariance description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: String,
    pub params: Vec<f64>,
    pub normalize: bool,
}

impl CovarianceSpec {
    /// Builds the model. Parameters: `squared_exponential: [l]`,
    /// `cosine_mixture: [a_1, w_1, a_2, w_2, ...]`, `latitude_circle: [r]`.
    pub fn build(&self) -> Result<CovarianceModel, CovarianceError> {
        let p = &self.params;
        let expect = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(CovarianceError::InvalidParameters(format!(
                    "{} takes {n} parameter(s), got {}",
                    self.family,
                    p.len()
                )))
            }
        };
        let model = match self.family.as_str() {
            "squared_exponential" | "se" => {
                expect(1)?;
                CovarianceModel::squared_exponential(p[0])?
            }
            "cosine_mixture" | "cosine" => {
                if p.is_empty() || !p.len().is_multiple_of(2) {
                    return Err(CovarianceError::InvalidParameters(
                        "cosine_mixture takes weight/frequency pairs".into(),
                    ));
                }
                let (weights, frequencies) = p.chunks(2).map(|c| (c[0], c[1])).unzip();
                CovarianceModel::cosine_mixture(weights, frequencies)?
            }
            "latitude_circle" | "latitude" => {
                expect(1)?;
                CovarianceModel::latitude_circle(p[0])?
            }
            other => {
                return Err(CovarianceError::InvalidParameters(format!(
                    "unknown covariance family `{other}`"
                )))
            }
        };
        if self.normalize {
            model.normalize_second_moment()
        } else {
            Ok(model)
        }
    }
}
