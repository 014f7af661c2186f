//! Critical variance `sigma_c^2(f)` and the error exponent it implies.
//!
//! For a stationary process on `[0, T]` (time scaled so `-R''(0) = 1`) the
//! variance of the auxiliary process `f^x(y)` depends on the lag `t = |x - y|`
//! only:
//!
//! ```text
//! interior:  (1 - R^2 - R'^2) / (1 - R)^2
//! endpoint:  (1 - R^2 - R'^2 + max(R', 0)^2) / (1 - R)^2
//! ```
//!
//! and tends to `R''''(0) - 1` as `t -> 0`. The finite Karhunen-Loeve case
//! lives in [`finite_kl`].

pub mod finite_kl;

use std::f64::consts::FRAC_PI_2;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceError, CovarianceModel, IsotropicModel};
use crate::optimize::golden_section_max;

pub use finite_kl::{sigma_critical_finite_kl, var_fx_finite_kl, ClosedCurve, FiniteKlModel};

/// Below this lag the ratio is 0/0 and the local value is used instead.
pub const EPS_DIAG: f64 = 1e-3;
/// Pairs with `1 - rho < EPS_RHO` are excluded from finite-KL maximization.
pub const EPS_RHO: f64 = 1e-6;
/// A supremum within this distance of the local value counts as attained locally.
pub const TOL_ATTAIN: f64 = 1e-6;
/// Coarse grid size for lag maximization.
pub const GRID_POINTS: usize = 4096;
/// Width of the final golden-section bracket.
pub const REFINE_TOL: f64 = 1e-10;
/// Negative variances down to this value are rounding and get clamped to 0.
pub const NEG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigmaError {
    #[error("model must be normalized to -R''(0) = 1 first")]
    NotNormalized,
    #[error("lag {0} is inside the near-diagonal band; use sigma_local")]
    NearDiagonal(f64),
    #[error("R(t) = 1 at t = {0}: distinct points are perfectly correlated")]
    DegenerateLag(f64),
    #[error("negative variance {0}: the model is not a valid covariance")]
    NegativeVariance(f64),
    #[error("radial covariance is not monotone nonincreasing; use the grid methods instead")]
    NotMonotone,
    #[error("points too close: 1 - rho = {0} is inside the excluded band")]
    TooClose(f64),
    #[error("invalid finite-KL model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MonotoneShortcut,
    GridRefine,
    #[serde(rename = "finite-KL")]
    FiniteKl,
}

/// Where the supremum was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgMax {
    /// The near-diagonal limit.
    Local(LocalMarker),
    /// Lag `t` of the stationary optimand.
    Lag(f64),
    /// Parameter pair `(x, y)` of a finite-KL curve.
    Pair([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMarker {
    Local,
}

impl ArgMax {
    pub const LOCAL: ArgMax = ArgMax::Local(LocalMarker::Local);
}

/// A real number that may be `+inf`, serialized as the string `"+inf"` in that case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extended {
    Finite(f64),
    Infinite(InfinityMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfinityMarker {
    #[serde(rename = "+inf")]
    PlusInf,
}

impl Extended {
    pub const INFINITY: Extended = Extended::Infinite(InfinityMarker::PlusInf);

    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            Self::INFINITY
        } else {
            Extended::Finite(x)
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Extended::Finite(x) => *x,
            Extended::Infinite(_) => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::Infinite(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalVarianceReport {
    pub sigma_c_sq: f64,
    pub argmax_t: ArgMax,
    pub attained_locally: bool,
    /// `(1 + 1/sigma_c^2) / 2`, the lower bound on `liminf -u^{-2} log |Diff(u)|`.
    pub exponent: Extended,
    /// `arccot(sqrt(sigma_c^2))`.
    pub theta_c: f64,
    pub method: Method,
}

impl CriticalVarianceReport {
    pub fn new(sigma_c_sq: f64, argmax_t: ArgMax, attained_locally: bool, method: Method) -> Self {
        let exponent = if sigma_c_sq > 0.0 {
            Extended::Finite(0.5 * (1.0 + 1.0 / sigma_c_sq))
        } else {
            Extended::INFINITY
        };
        CriticalVarianceReport {
            sigma_c_sq,
            argmax_t,
            attained_locally,
            exponent,
            theta_c: critical_angle(sigma_c_sq),
            method,
        }
    }

    /// Decay rate of `|Diff(u)|` against `u^2/2`: `1 + 1/sigma_c^2`, i.e. twice the exponent.
    pub fn bound(&self) -> Extended {
        match self.exponent {
            Extended::Finite(e) => Extended::Finite(2.0 * e),
            inf => inf,
        }
    }
}

/// `arccot(sqrt(sigma_c_sq))`, equal to `pi/2` when `sigma_c_sq = 0`.
pub fn critical_angle(sigma_c_sq: f64) -> f64 {
    if sigma_c_sq <= 0.0 {
        FRAC_PI_2
    } else {
        1.0f64.atan2(sigma_c_sq.sqrt())
    }
}

pub(crate) fn clamp_variance(value: f64) -> Result<f64, SigmaError> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEG_TOL {
        warn!("clamping variance {value:e} to 0");
        Ok(0.0)
    } else {
        Err(SigmaError::NegativeVariance(value))
    }
}

fn require_normalized(model: &CovarianceModel) -> Result<(), SigmaError> {
    if model.is_normalized() {
        Ok(())
    } else {
        Err(SigmaError::NotNormalized)
    }
}

/// Unchecked optimand; `boundary` adds the endpoint term.
fn lag_ratio(model: &CovarianceModel, t: f64, boundary: bool) -> Result<f64, SigmaError> {
    let om = model.one_minus(t);
    if om <= 1e-14 {
        return Err(SigmaError::DegenerateLag(t));
    }
    let mut numerator = model.regression_residual(t);
    if boundary {
        let slope = model.derivative_unchecked(t, 1).max(0.0);
        numerator += slope * slope;
    }
    clamp_variance(numerator / (om * om))
}

fn check_lag(model: &CovarianceModel, t: f64) -> Result<(), SigmaError> {
    require_normalized(model)?;
    if t < EPS_DIAG {
        return Err(SigmaError::NearDiagonal(t));
    }
    Ok(())
}

/// Interior optimand `(1 - R(t)^2 - R'(t)^2) / (1 - R(t))^2`.
pub fn var_fx_interior(model: &CovarianceModel, t: f64) -> Result<f64, SigmaError> {
    check_lag(model, t)?;
    lag_ratio(model, t, false)
}

/// Endpoint optimand `(1 - R^2 - R'^2 + max(R', 0)^2) / (1 - R)^2`.
pub fn var_fx_boundary(model: &CovarianceModel, t: f64) -> Result<f64, SigmaError> {
    check_lag(model, t)?;
    lag_ratio(model, t, true)
}

/// Local critical variance `R''''(0) - 1 = Var(f''(x) | f(x))`.
pub fn sigma_local(model: &CovarianceModel) -> Result<f64, SigmaError> {
    require_normalized(model)?;
    clamp_variance(model.fourth_spectral_moment() - 1.0)
}

/// `sigma_c^2` of a stationary process on `[0, T]`, `T` in the normalized time units of `model`.
///
/// Coarse grid of [`GRID_POINTS`] lags in `[EPS_DIAG, T]`, then golden-section refinement
/// on the bracket around the best grid point. Ties go to the smallest lag.
pub fn sigma_critical_interval(
    model: &CovarianceModel,
    length: f64,
) -> Result<CriticalVarianceReport, SigmaError> {
    require_normalized(model)?;
    let local = sigma_local(model)?;
    if length <= EPS_DIAG {
        return Ok(CriticalVarianceReport::new(
            local,
            ArgMax::LOCAL,
            true,
            Method::GridRefine,
        ));
    }
    let step = (length - EPS_DIAG) / (GRID_POINTS - 1) as f64;
    let lag = |k: usize| {
        if k + 1 == GRID_POINTS {
            length
        } else {
            EPS_DIAG + step * k as f64
        }
    };
    let values = (0..GRID_POINTS)
        .into_par_iter()
        .map(|k| lag_ratio(model, lag(k), true))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    let lo = lag(best.saturating_sub(1));
    let hi = lag((best + 1).min(GRID_POINTS - 1));
    let (mut t_star, mut sup) = golden_section_max(
        |t| lag_ratio(model, t, true).unwrap_or(f64::NEG_INFINITY),
        lo,
        hi,
        REFINE_TOL,
    );
    if values[best] >= sup {
        t_star = lag(best);
        sup = values[best];
    }
    let attained_locally = sup <= local + TOL_ATTAIN;
    let argmax = if attained_locally {
        ArgMax::LOCAL
    } else {
        ArgMax::Lag(t_star)
    };
    Ok(CriticalVarianceReport::new(
        local.max(sup),
        argmax,
        attained_locally,
        Method::GridRefine,
    ))
}

/// `sigma_c^2 = sigma_local` when `R' <= 0` on `(0, T]`; `None` when that hypothesis fails.
pub fn sigma_monotone_shortcut(
    model: &CovarianceModel,
    length: f64,
) -> Result<Option<CriticalVarianceReport>, SigmaError> {
    require_normalized(model)?;
    if !model.is_monotone_nonincreasing(length, 4 * GRID_POINTS) {
        return Ok(None);
    }
    Ok(Some(CriticalVarianceReport::new(
        sigma_local(model)?,
        ArgMax::LOCAL,
        true,
        Method::MonotoneShortcut,
    )))
}

/// `sigma_c^2` of an isotropic field with monotone radial covariance restricted to any
/// compact convex set: `Var(d^2 f / dt_1^2 | f) = R''''(0) - 1` after normalization.
pub fn sigma_isotropic_convex(
    model: &IsotropicModel,
) -> Result<CriticalVarianceReport, SigmaError> {
    if !model.is_monotone() {
        return Err(SigmaError::NotMonotone);
    }
    let radial = model.radial().normalize_second_moment()?;
    Ok(CriticalVarianceReport::new(
        sigma_local(&radial)?,
        ArgMax::LOCAL,
        true,
        Method::MonotoneShortcut,
    ))
}

/// `Var(f~^x(y)) = (1 + R(t)) / (1 - R(t))`, which diverges as `t -> 0`.
pub fn var_ftilde_diagnostic(model: &CovarianceModel, t: f64) -> Result<f64, SigmaError> {
    if !(t > 0.0) {
        return Err(SigmaError::NearDiagonal(t));
    }
    let om = model.one_minus(t);
    if om <= 0.0 {
        return Err(SigmaError::DegenerateLag(t));
    }
    Ok((2.0 - om) / om)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn se() -> CovarianceModel {
        CovarianceModel::squared_exponential(1.0).unwrap()
    }

    fn cos1() -> CovarianceModel {
        CovarianceModel::cosine_mixture(vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn interior_examples() {
        assert_relative_eq!(var_fx_interior(&se(), 40.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(var_fx_interior(&cos1(), 1.0).unwrap().abs() < 1e-12);
        assert!((var_fx_interior(&se(), 1e-3).unwrap() - 2.0).abs() < 1e-4);
        assert_eq!(
            var_fx_interior(&se(), 5e-4),
            Err(SigmaError::NearDiagonal(5e-4))
        );
        let raw = CovarianceModel::squared_exponential(2.0).unwrap();
        assert_eq!(var_fx_interior(&raw, 1.0), Err(SigmaError::NotNormalized));
    }

    #[test]
    fn boundary_examples() {
        for t in [0.01, 0.5, 1.0, 3.0] {
            assert_eq!(
                var_fx_boundary(&se(), t).unwrap(),
                var_fx_interior(&se(), t).unwrap()
            );
        }
        assert_relative_eq!(
            var_fx_boundary(&cos1(), 1.5 * PI).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn boundary_dominates_interior() {
        let blend = CovarianceModel::cosine_mixture(vec![0.4, 0.6], vec![1.0, 3.0])
            .unwrap()
            .normalize_second_moment()
            .unwrap();
        for model in [se(), cos1(), blend] {
            for k in 1..500 {
                let t = 0.02 * k as f64;
                if model.one_minus(t) < 1e-8 {
                    continue;
                }
                assert!(var_fx_boundary(&model, t).unwrap() >= var_fx_interior(&model, t).unwrap());
            }
        }
    }

    #[test]
    fn local_examples() {
        assert_relative_eq!(sigma_local(&se()).unwrap(), 2.0);
        assert_eq!(sigma_local(&cos1()).unwrap(), 0.0);
        for r in [0.3, 0.5, 0.8] {
            let lat = CovarianceModel::latitude_circle(r)
                .unwrap()
                .normalize_second_moment()
                .unwrap();
            assert_relative_eq!(
                sigma_local(&lat).unwrap(),
                (1.0 - r * r) / (r * r),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn richardson_limit_matches_local() {
        let blend = CovarianceModel::cosine_mixture(vec![0.4, 0.6], vec![1.0, 3.0])
            .unwrap()
            .normalize_second_moment()
            .unwrap();
        for model in [se(), blend] {
            let v = |t: f64| var_fx_interior(&model, t).unwrap();
            // error is O(t^2): two Richardson steps on a halving sequence
            let (a, b, c) = (v(1e-2), v(5e-3), v(2.5e-3));
            let r1 = (4.0 * b - a) / 3.0;
            let r2 = (4.0 * c - b) / 3.0;
            let extrapolated = (16.0 * r2 - r1) / 15.0;
            let local = sigma_local(&model).unwrap();
            assert!(
                (extrapolated - local).abs() < 1e-5,
                "{extrapolated} vs {local}"
            );
        }
    }

    #[test]
    fn interval_examples() {
        let report = sigma_critical_interval(&se(), 5.0).unwrap();
        assert!((report.sigma_c_sq - 2.0).abs() <= 1e-6);
        assert!(report.attained_locally);
        assert_eq!(report.argmax_t, ArgMax::LOCAL);
        assert_relative_eq!(report.exponent.value(), 0.75);

        let report = sigma_critical_interval(&cos1(), PI).unwrap();
        assert!(report.sigma_c_sq.abs() <= 1e-6);
        assert!(report.exponent.is_infinite());
        assert_relative_eq!(report.theta_c, FRAC_PI_2, epsilon = 1e-3);
    }

    #[test]
    fn degenerate_lag_is_reported() {
        // cos t returns to 1 at 2 pi
        assert!(matches!(
            sigma_critical_interval(&cos1(), 2.0 * PI),
            Err(SigmaError::DegenerateLag(_))
        ));
    }

    #[test]
    fn shortcut_examples() {
        let report = sigma_monotone_shortcut(&se(), 10.0).unwrap().unwrap();
        assert_eq!(report.method, Method::MonotoneShortcut);
        assert_relative_eq!(report.sigma_c_sq, 2.0);
        let blend = CovarianceModel::cosine_mixture(vec![0.4, 0.6], vec![1.0, 3.0])
            .unwrap()
            .normalize_second_moment()
            .unwrap();
        assert!(sigma_monotone_shortcut(&blend, 10.0).unwrap().is_none());
    }

    #[test]
    fn shortcut_agrees_with_grid() {
        for l in [0.5, 1.0, 2.0] {
            let m = CovarianceModel::squared_exponential(l)
                .unwrap()
                .normalize_second_moment()
                .unwrap();
            for t in [0.5, 3.0, 12.0] {
                let short = sigma_monotone_shortcut(&m, t).unwrap().unwrap();
                let grid = sigma_critical_interval(&m, t).unwrap();
                assert!((short.sigma_c_sq - grid.sigma_c_sq).abs() <= TOL_ATTAIN);
            }
        }
    }

    #[test]
    fn isotropic_examples() {
        let iso = IsotropicModel::new(se(), 2).unwrap();
        let report = sigma_isotropic_convex(&iso).unwrap();
        assert_relative_eq!(report.sigma_c_sq, 2.0);
        assert!(report.attained_locally);
        // any length scale normalizes to the same value
        let wide =
            IsotropicModel::new(CovarianceModel::squared_exponential(3.0).unwrap(), 3).unwrap();
        assert_relative_eq!(
            sigma_isotropic_convex(&wide).unwrap().sigma_c_sq,
            2.0,
            max_relative = 1e-12
        );
        let bad = IsotropicModel::new(cos1(), 2).unwrap();
        assert_eq!(sigma_isotropic_convex(&bad), Err(SigmaError::NotMonotone));
    }

    #[test]
    fn ftilde_diagnostic() {
        // cos vanishes at pi/2
        assert_relative_eq!(
            var_ftilde_diagnostic(&cos1(), PI / 2.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(var_ftilde_diagnostic(&se(), 1e-6).unwrap() > 1e10);
        assert!(var_ftilde_diagnostic(&se(), 0.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let v = var_ftilde_diagnostic(&se(), 0.05 * k as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn exponent_mapping() {
        for (s, e) in [(0.5, 1.5), (1.0, 1.0), (2.0, 0.75), (3.0, 2.0 / 3.0)] {
            let r = CriticalVarianceReport::new(s, ArgMax::LOCAL, true, Method::GridRefine);
            assert_eq!(r.exponent, Extended::Finite(e));
        }
        let r = CriticalVarianceReport::new(0.0, ArgMax::LOCAL, true, Method::GridRefine);
        assert!(r.exponent.is_infinite());
        assert!(r.bound().is_infinite());
    }

    #[test]
    fn report_serialization() {
        let r = CriticalVarianceReport::new(0.0, ArgMax::LOCAL, true, Method::FiniteKl);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"exponent\":\"+inf\""), "{json}");
        assert!(json.contains("\"argmax_t\":\"local\""), "{json}");
        assert!(json.contains("\"method\":\"finite-KL\""), "{json}");
        let back: CriticalVarianceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
