//! Expected Euler characteristic approximation of `P(sup f >= u)` and the
//! chi-square tube bound for finite Karhunen-Loeve processes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::checked_gamma_ur;
use thiserror::Error;

use crate::covariance::CovarianceModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("critical angle {0} must lie in [0, pi/2)")]
    ThetaOutOfRange(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Probabilists' Hermite polynomial `He_j(x)`.
pub fn hermite(j: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if j == 0 {
        return prev;
    }
    for k in 1..j {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Standard Gaussian upper tail `Q(u) = P(Z >= u)`.
pub fn gaussian_tail(u: f64) -> f64 {
    0.5 * erfc(u * FRAC_1_SQRT_2)
}

/// `(2 pi)^{-(j+1)/2} int_u^inf He_j(r) e^{-r^2/2} dr`, in closed form.
///
/// For `j >= 1` the integral collapses because `d/dr[He_{j-1}(r) e^{-r^2/2}] = -He_j(r) e^{-r^2/2}`.
pub fn ec_density(j: usize, u: f64) -> f64 {
    if j == 0 {
        return gaussian_tail(u);
    }
    (2.0 * PI).powf(-0.5 * (j as f64 + 1.0)) * hermite(j - 1, u) * (-0.5 * u * u).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Interval { length: f64 },
    Box { sides: Vec<f64> },
    ConvexPlanar { area: f64, perimeter: f64 },
}

impl Shape {
    pub fn dimension(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            Shape::Box { sides } => sides.len(),
            Shape::ConvexPlanar { .. } => 2,
        }
    }
}

/// Parameter space with the (constant) metric induced by a stationary field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    shape: Shape,
    metric_scale: f64,
}

impl ParameterSpace {
    /// `metric_scale` is `sqrt(lambda_2)`, the length of a unit coordinate vector in the induced metric.
    pub fn new(shape: Shape, metric_scale: f64) -> Result<Self, EcError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(metric_scale) {
            return Err(EcError::InvalidSpace(format!(
                "metric scale must be positive, got {metric_scale}"
            )));
        }
        match &shape {
            Shape::Interval { length } if !positive(*length) => {
                return Err(EcError::InvalidSpace(format!(
                    "interval length must be positive, got {length}"
                )))
            }
            Shape::Box { sides } if sides.is_empty() || !sides.iter().all(|s| positive(*s)) => {
                return Err(EcError::InvalidSpace(
                    "box needs at least one side and all sides positive".into(),
                ))
            }
            Shape::ConvexPlanar { area, perimeter } => {
                if !positive(*area) || !positive(*perimeter) {
                    return Err(EcError::InvalidSpace(
                        "area and perimeter must be positive".into(),
                    ));
                }
                // isoperimetric inequality, with slack for rounding
                if perimeter * perimeter < 4.0 * PI * area * (1.0 - 1e-12) {
                    return Err(EcError::InvalidSpace(format!(
                        "no planar body has area {area} and perimeter {perimeter}"
                    )));
                }
            }
            _ => {}
        }
        Ok(ParameterSpace {
            shape,
            metric_scale,
        })
    }

    /// Uses the induced metric of `model`, i.e. `metric_scale = sqrt(-R''(0))`.
    pub fn for_model(shape: Shape, model: &CovarianceModel) -> Result<Self, EcError> {
        Self::new(shape, model.second_spectral_moment().sqrt())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    pub fn dimension(&self) -> usize {
        self.shape.dimension()
    }

    /// Lipschitz-Killing curvatures `L_0..L_dim` under the induced metric.
    pub fn lk_curvatures(&self) -> Vec<f64> {
        let unscaled = match &self.shape {
            Shape::Interval { length } => vec![1.0, *length],
            Shape::Box { sides } => elementary_symmetric(sides),
            Shape::ConvexPlanar { area, perimeter } => vec![1.0, 0.5 * perimeter, *area],
        };
        unscaled
            .into_iter()
            .enumerate()
            .map(|(j, l)| l * self.metric_scale.powi(j as i32))
            .collect()
    }
}

/// `e_0..e_m` of the given values.
fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (i, v) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcApproximation {
    pub level: f64,
    /// `L_j(M) * ec_density(j, u)` for `j = 0..=dim`.
    pub terms: Vec<f64>,
    pub total: f64,
}

/// `P_hat(sup f >= u) = sum_j L_j(M) rho_j(u)`.
pub fn ec_approximation(space: &ParameterSpace, u: f64) -> EcApproximation {
    let terms: Vec<f64> = space
        .lk_curvatures()
        .iter()
        .enumerate()
        .map(|(j, l)| l * ec_density(j, u))
        .collect();
    EcApproximation {
        level: u,
        total: terms.iter().sum(),
        terms,
    }
}

/// Upper tail of a chi-square with `dof` degrees of freedom.
pub fn chi_square_tail(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    checked_gamma_ur(0.5 * dof as f64, 0.5 * x).unwrap_or(0.0)
}

/// `C * P(chi^2_n >= u^2 / cos^2 theta_c)`.
///
/// The constant `C` has no known closed form; callers that have nothing better use 1.0.
pub fn finite_kl_bound(n: usize, theta_c: f64, u: f64, c: f64) -> Result<f64, EcError> {
    if !(0.0..PI / 2.0).contains(&theta_c) {
        return Err(EcError::ThetaOutOfRange(theta_c));
    }
    if n == 0 {
        return Err(EcError::InvalidArgument(
            "sphere dimension n must be >= 1".into(),
        ));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(EcError::InvalidArgument(format!(
            "C must be positive, got {c}"
        )));
    }
    if !(u.is_finite() && u >= 0.0) {
        return Err(EcError::InvalidArgument(format!(
            "level must be >= 0, got {u}"
        )));
    }
    let cos = theta_c.cos();
    Ok(c * chi_square_tail(n, u * u / (cos * cos)))
}
