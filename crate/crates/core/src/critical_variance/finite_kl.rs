//! Critical variance of a finite Karhunen-Loeve process `f(x) = <phi(x), xi>` on a closed
//! curve, where `phi` maps the curve into the unit sphere of `R^n`.
//!
//! Without boundary the auxiliary variance is the squared distance of `phi(y)` from
//! `L_x = span{phi(x), phi'(x)}`, over `(1 - rho(x, y))^2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{
    clamp_variance, ArgMax, CriticalVarianceReport, Method, SigmaError, EPS_RHO, REFINE_TOL,
    TOL_ATTAIN,
};
use crate::optimize::golden_section_max;

const UNIT_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-12;

/// A closed curve parameterized by `s` in `[0, 2 pi)`.
pub trait ClosedCurve: Send + Sync {
    fn ambient_dim(&self) -> usize;
    /// `(phi(s), phi'(s))`.
    fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>);
}

/// Curve given by a closure returning `(phi(s), phi'(s))`.
pub struct FnCurve<F> {
    dim: usize,
    f: F,
}

impl<F> FnCurve<F>
where
    F: Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnCurve { dim, f }
    }
}

impl<F> ClosedCurve for FnCurve<F>
where
    F: Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync,
{
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        (self.f)(s)
    }
}

/// Trigonometric interpolant of equispaced samples of a closed curve.
pub struct SampledCurve {
    /// DFT of each component, `coeffs[c][k]`.
    coeffs: Vec<Vec<Complex64>>,
    n: usize,
}

impl SampledCurve {
    pub fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let dim = points.first().map_or(0, Vec::len);
        let fft = FftPlanner::new().plan_fft_forward(n);
        let coeffs = (0..dim)
            .map(|c| {
                let mut buf: Vec<Complex64> =
                    points.iter().map(|p| Complex64::new(p[c], 0.0)).collect();
                fft.process(&mut buf);
                buf
            })
            .collect();
        SampledCurve { coeffs, n }
    }

    fn frequency(&self, k: usize) -> f64 {
        if 2 * k <= self.n {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }
}

impl ClosedCurve for SampledCurve {
    fn ambient_dim(&self) -> usize {
        self.coeffs.len()
    }

    fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let nyquist = self.n.is_multiple_of(2).then_some(self.n / 2);
        let mut value = vec![0.0; self.coeffs.len()];
        let mut slope = vec![0.0; self.coeffs.len()];
        for k in 0..self.n {
            let freq = self.frequency(k);
            let (sin, cos) = (freq * s).sin_cos();
            for (c, coeffs) in self.coeffs.iter().enumerate() {
                let z = coeffs[k];
                if Some(k) == nyquist {
                    // real cosine mode; its derivative vanishes at the samples
                    value[c] += z.re * cos / n;
                    slope[c] -= freq * z.re * sin / n;
                } else {
                    value[c] += (z.re * cos - z.im * sin) / n;
                    slope[c] += freq * (-z.re * sin - z.im * cos) / n;
                }
            }
        }
        (value, slope)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis of the span, by modified Gram-Schmidt with one re-orthogonalization pass.
/// Vectors whose residual falls below `RANK_TOL` (after scaling to unit length) are dropped.
pub fn orthonormal_basis(vectors: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let len = norm(v);
        if len == 0.0 {
            continue;
        }
        let mut w: Vec<f64> = v.iter().map(|x| x / len).collect();
        for _ in 0..2 {
            for e in &basis {
                let c = dot(&w, e);
                w.iter_mut().zip(e).for_each(|(wi, ei)| *wi -= c * ei);
            }
        }
        let len = norm(&w);
        if len < RANK_TOL {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= len);
        basis.push(w);
    }
    basis
}

/// `||P_perp (phi_y - phi_x)||^2 / (1 - rho)^2`, with `basis` spanning `L_x`.
fn projected_ratio(phi_x: &[f64], basis: &[Vec<f64>], phi_y: &[f64]) -> Result<f64, SigmaError> {
    let mut d: Vec<f64> = phi_y.iter().zip(phi_x).map(|(a, b)| a - b).collect();
    // both unit vectors: 1 - rho = |phi_y - phi_x|^2 / 2 without cancellation
    let one_minus_rho = 0.5 * dot(&d, &d);
    if one_minus_rho < EPS_RHO {
        return Err(SigmaError::TooClose(one_minus_rho));
    }
    for _ in 0..2 {
        for e in basis {
            let c = dot(&d, e);
            d.iter_mut().zip(e).for_each(|(di, ei)| *di -= c * ei);
        }
    }
    clamp_variance(dot(&d, &d) / (one_minus_rho * one_minus_rho))
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let len = norm(&v);
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
    v
}

/// `phi` and `phi'` sampled on an equispaced grid of a closed curve, plus a continuous
/// curve used for local refinement.
#[derive(Clone)]
pub struct FiniteKlModel {
    params: Vec<f64>,
    points: Vec<Vec<f64>>,
    tangents: Vec<Vec<f64>>,
    curve: Arc<dyn ClosedCurve>,
}

impl fmt::Debug for FiniteKlModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteKlModel")
            .field("n_grid", &self.points.len())
            .field("ambient_dim", &self.curve.ambient_dim())
            .finish()
    }
}

impl FiniteKlModel {
    /// Samples `curve` at `s_i = 2 pi i / n_grid`.
    pub fn from_curve(curve: Arc<dyn ClosedCurve>, n_grid: usize) -> Result<Self, SigmaError> {
        let params: Vec<f64> = (0..n_grid)
            .map(|i| 2.0 * PI * i as f64 / n_grid as f64)
            .collect();
        let (points, tangents) = params.iter().map(|s| curve.eval(*s)).unzip();
        Self::checked(params, points, tangents, curve)
    }

    /// Builds a model from samples of `phi` on an equispaced grid of a closed curve.
    /// Missing tangents are obtained by periodic spectral differentiation.
    pub fn from_samples(
        points: Vec<Vec<f64>>,
        tangents: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, SigmaError> {
        let n_grid = points.len();
        if n_grid < 8 {
            return Err(SigmaError::InvalidModel(format!(
                "need at least 8 grid points, got {n_grid}"
            )));
        }
        let dim = points[0].len();
        if dim < 2 || points.iter().any(|p| p.len() != dim) {
            return Err(SigmaError::InvalidModel(
                "rows must share one ambient dimension >= 2".into(),
            ));
        }
        let curve = SampledCurve::new(&points);
        let params: Vec<f64> = (0..n_grid)
            .map(|i| 2.0 * PI * i as f64 / n_grid as f64)
            .collect();
        let tangents = match tangents {
            Some(t) => {
                if t.len() != n_grid || t.iter().any(|v| v.len() != dim) {
                    return Err(SigmaError::InvalidModel(
                        "tangent rows must match the point rows".into(),
                    ));
                }
                t
            }
            None => params.iter().map(|s| curve.eval(*s).1).collect(),
        };
        Self::checked(params, points, tangents, Arc::new(curve))
    }

    /// `phi(x) = (r cos x, r sin x, sqrt(1 - r^2))`, whose covariance is `1 - r^2 + r^2 cos(x - y)`.
    pub fn latitude_circle(radius: f64, n_grid: usize) -> Result<Self, SigmaError> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(SigmaError::InvalidModel(format!(
                "latitude radius must lie in (0, 1), got {radius}"
            )));
        }
        let height = (1.0 - radius * radius).sqrt();
        let curve = FnCurve::new(3, move |s: f64| {
            let (sin, cos) = s.sin_cos();
            (
                vec![radius * cos, radius * sin, height],
                vec![-radius * sin, radius * cos, 0.0],
            )
        });
        Self::from_curve(Arc::new(curve), n_grid)
    }

    fn checked(
        params: Vec<f64>,
        points: Vec<Vec<f64>>,
        tangents: Vec<Vec<f64>>,
        curve: Arc<dyn ClosedCurve>,
    ) -> Result<Self, SigmaError> {
        if points.len() < 8 {
            return Err(SigmaError::InvalidModel(
                "need at least 8 grid points".into(),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            let len = norm(p);
            if (len - 1.0).abs() > UNIT_TOL {
                return Err(SigmaError::InvalidModel(format!(
                    "|phi| = {len} at grid point {i}; the process must have unit variance"
                )));
            }
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d2: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 == 0.0 {
                    return Err(SigmaError::InvalidModel(format!(
                        "grid points {i} and {j} coincide (rho = 1)"
                    )));
                }
            }
        }
        Ok(FiniteKlModel {
            params,
            points,
            tangents,
            curve,
        })
    }

    pub fn n_grid(&self) -> usize {
        self.points.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.curve.ambient_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn tangents(&self) -> &[Vec<f64>] {
        &self.tangents
    }

    /// `rho(x_i, x_j)`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        dot(&self.points[i], &self.points[j])
    }

    fn basis_at(&self, i: usize) -> Vec<Vec<f64>> {
        orthonormal_basis(&[&self.points[i], &self.tangents[i]])
    }

    /// Variance at continuous parameters, for refinement.
    fn continuous_ratio(&self, x: f64, y: f64) -> f64 {
        let (px, tx) = self.curve.eval(x);
        let px = normalized(px);
        let py = normalized(self.curve.eval(y).0);
        let basis = orthonormal_basis(&[&px, &tx]);
        projected_ratio(&px, &basis, &py).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `Var(f^x(y))` for grid points `x_index != y_index`.
pub fn var_fx_finite_kl(
    model: &FiniteKlModel,
    x_index: usize,
    y_index: usize,
) -> Result<f64, SigmaError> {
    let n = model.n_grid();
    if x_index >= n || y_index >= n {
        return Err(SigmaError::InvalidModel(format!(
            "grid index out of range: ({x_index}, {y_index}) with {n} points"
        )));
    }
    let basis = model.basis_at(x_index);
    projected_ratio(&model.points[x_index], &basis, &model.points[y_index])
}

/// `sigma_c^2 = sup_{x != y} Var(f^x(y))` over the grid (pairs inside the `EPS_RHO` band are
/// skipped), refined by alternating golden-section steps on the continuous curve.
///
/// `attained_locally` compares the supremum with the largest value over nearest admissible
/// neighbours.
pub fn sigma_critical_finite_kl(
    model: &FiniteKlModel,
) -> Result<CriticalVarianceReport, SigmaError> {
    let n = model.n_grid();
    // (best value, its column, value at the nearest admissible neighbour)
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let basis = model.basis_at(i);
            let mut best: Option<(f64, usize)> = None;
            let mut nearest: Option<(usize, f64)> = None;
            for j in (0..n).filter(|j| *j != i) {
                let v = match projected_ratio(&model.points[i], &basis, &model.points[j]) {
                    Ok(v) => v,
                    Err(SigmaError::TooClose(_)) => continue,
                    Err(e) => return Err(e),
                };
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, j));
                }
                let gap = (j + n - i) % n;
                let gap = gap.min(n - gap);
                if nearest.is_none_or(|(g, nv)| gap < g || (gap == g && v > nv)) {
                    nearest = Some((gap, v));
                }
            }
            Ok((best, nearest.map(|(_, v)| v)))
        })
        .collect::<Result<Vec<_>, SigmaError>>()?;

    let mut best: Option<(f64, usize, usize)> = None;
    let mut local = f64::NEG_INFINITY;
    for (i, (row_best, row_local)) in rows.iter().enumerate() {
        if let Some((v, j)) = row_best {
            if best.is_none_or(|(b, _, _)| *v > b) {
                best = Some((*v, i, *j));
            }
        }
        if let Some(v) = row_local {
            local = local.max(*v);
        }
    }
    let (grid_sup, bi, bj) = best.ok_or_else(|| {
        SigmaError::InvalidModel("every pair lies inside the excluded band".into())
    })?;

    let h = 2.0 * PI / n as f64;
    let (mut x, mut y) = (model.params[bi], model.params[bj]);
    let mut sup = grid_sup;
    for _ in 0..3 {
        let (nx, vx) =
            golden_section_max(|s| model.continuous_ratio(s, y), x - h, x + h, REFINE_TOL);
        if vx > sup {
            sup = vx;
            x = nx;
        }
        let (ny, vy) =
            golden_section_max(|s| model.continuous_ratio(x, s), y - h, y + h, REFINE_TOL);
        if vy > sup {
            sup = vy;
            y = ny;
        }
    }
    let attained_locally = sup <= local + TOL_ATTAIN;
    let argmax = if attained_locally {
        ArgMax::LOCAL
    } else {
        ArgMax::Pair([x.rem_euclid(2.0 * PI), y.rem_euclid(2.0 * PI)])
    };
    Ok(CriticalVarianceReport::new(
        sup,
        argmax,
        attained_locally,
        Method::FiniteKl,
    ))
}
