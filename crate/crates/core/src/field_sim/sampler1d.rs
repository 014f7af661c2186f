//! Exact simulation of a stationary process on an equispaced grid by circulant embedding.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::stream::FieldSampler;
use super::SimError;
use crate::covariance::CovarianceModel;

/// Eigenvalues with `|lambda| <= TOL_PSD * max` are rounding noise and are zeroed silently.
pub const TOL_PSD: f64 = 1e-12;
/// Largest tolerated fraction of spectral mass removed by clamping.
pub const MAX_CLAMPED_MASS: f64 = 1e-6;
const PAD_RETRIES: usize = 3;
const CHECK_LAGS: usize = 16;
const CHECK_TOL: f64 = 1e-8;

pub struct GridSampler1D {
    covariance: CovarianceModel,
    length: f64,
    n_grid: usize,
    pad_factor: usize,
    embedding_size: usize,
    /// `(k, sqrt(lambda_k / m))` for the nonzero eigenvalues.
    amplitudes: Vec<(usize, f64)>,
    spectrum: Vec<f64>,
    clamped_mass: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridSampler1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridSampler1D")
            .field("length", &self.length)
            .field("n_grid", &self.n_grid)
            .field("pad_factor", &self.pad_factor)
            .field("embedding_size", &self.embedding_size)
            .field("clamped_mass", &self.clamped_mass)
            .finish()
    }
}

/// Circle size: `base`, or the next multiple of the period in grid steps when the
/// covariance is periodic with a period commensurate with the grid (the embedding is then exact).
fn embedding_size(base: usize, spacing: f64, period: Option<f64>) -> usize {
    if let Some(p) = period {
        let steps = p / spacing;
        let rounded = steps.round();
        if rounded >= 1.0 && (steps - rounded).abs() <= 1e-6 {
            let s = rounded as usize;
            return base.div_ceil(s) * s;
        }
    }
    base
}

impl GridSampler1D {
    /// Builds a sampler for `model` on `n_grid` equispaced points of `[0, length]`.
    ///
    /// `n_grid` must be a power of two `>= 1024` and `pad_factor >= 2`. If the embedding has
    /// eigenvalues below `-TOL_PSD * max`, the pad factor is doubled up to three times; after
    /// that negative eigenvalues are clamped, and construction fails if the clamped mass
    /// exceeds [`MAX_CLAMPED_MASS`] of the total.
    pub fn build(
        model: &CovarianceModel,
        length: f64,
        n_grid: usize,
        pad_factor: usize,
    ) -> Result<Self, SimError> {
        if !n_grid.is_power_of_two() || n_grid < 1024 {
            return Err(SimError::InvalidGrid(format!(
                "n_grid must be a power of two >= 1024, got {n_grid}"
            )));
        }
        if pad_factor < 2 {
            return Err(SimError::InvalidGrid(format!(
                "pad_factor must be >= 2, got {pad_factor}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SimError::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        let spacing = length / (n_grid - 1) as f64;
        let mut planner = FftPlanner::new();
        let mut pad = pad_factor;
        let mut attempt = 0;
        loop {
            let m = embedding_size(pad * n_grid, spacing, model.period());
            let fft = planner.plan_fft_forward(m);
            let mut buf: Vec<Complex64> = (0..m)
                .map(|k| Complex64::new(model.evaluate(k.min(m - k) as f64 * spacing), 0.0))
                .collect();
            fft.process(&mut buf);
            let eig: Vec<f64> = buf.iter().map(|z| z.re).collect();
            let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -TOL_PSD * max && attempt < PAD_RETRIES {
                attempt += 1;
                pad *= 2;
                log::info!("circulant embedding min eigenvalue {min:e}; retrying with pad {pad}");
                continue;
            }
            let noise = TOL_PSD * max;
            let total: f64 = eig.iter().filter(|l| **l > 0.0).sum();
            let clamped: f64 = eig.iter().filter(|l| **l < -noise).map(|l| -l).sum();
            let clamped_mass = clamped / total;
            if clamped_mass > MAX_CLAMPED_MASS {
                return Err(SimError::Embedding {
                    clamped_mass,
                    min_eigenvalue: min,
                    max_eigenvalue: max,
                    embedding_size: m,
                    pad_factor: pad,
                });
            }
            if clamped > 0.0 {
                log::warn!("clamped {clamped_mass:e} of the circulant spectrum");
            }
            let spectrum: Vec<f64> = eig
                .iter()
                .map(|l| if *l > noise { *l } else { 0.0 })
                .collect();
            let sampler = GridSampler1D {
                covariance: model.clone(),
                length,
                n_grid,
                pad_factor: pad,
                embedding_size: m,
                amplitudes: spectrum
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l > 0.0)
                    .map(|(k, l)| (k, (l / m as f64).sqrt()))
                    .collect(),
                spectrum,
                clamped_mass,
                fft,
            };
            sampler.check_covariance(&mut planner)?;
            return Ok(sampler);
        }
    }

    /// Covariance implied by the clamped spectrum versus `R` on the first lags.
    fn check_covariance(&self, planner: &mut FftPlanner<f64>) -> Result<(), SimError> {
        let m = self.embedding_size;
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .map(|l| Complex64::new(*l, 0.0))
            .collect();
        planner.plan_fft_inverse(m).process(&mut buf);
        for lag in 0..CHECK_LAGS {
            let implied = buf[lag].re / m as f64;
            let error = (implied - self.covariance.evaluate(lag as f64 * self.spacing())).abs();
            if error > CHECK_TOL {
                return Err(SimError::CovarianceMismatch { lag, error });
            }
        }
        Ok(())
    }

    pub fn covariance(&self) -> &CovarianceModel {
        &self.covariance
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// Pad factor actually used, after any doubling retries.
    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    pub fn embedding_size(&self) -> usize {
        self.embedding_size
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_grid - 1) as f64
    }

    /// Nonnegative circulant eigenvalues.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Fraction of spectral mass removed by clamping.
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }
}

pub struct Scratch1D {
    buf: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl FieldSampler for GridSampler1D {
    type Scratch = Scratch1D;

    fn shape(&self) -> (usize, usize) {
        (self.n_grid, 1)
    }

    fn scratch(&self) -> Scratch1D {
        Scratch1D {
            buf: vec![Complex64::new(0.0, 0.0); self.embedding_size],
            fft_scratch: vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, scratch: &mut Scratch1D, a: &mut [f64], b: &mut [f64]) {
        scratch
            .buf
            .iter_mut()
            .for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (k, amp) in &self.amplitudes {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            scratch.buf[*k] = Complex64::new(amp * re, amp * im);
        }
        self.fft
            .process_with_scratch(&mut scratch.buf, &mut scratch.fft_scratch);
        for ((z, x), y) in scratch.buf.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
            *x = z.re;
            *y = z.im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::stream::{fold_paths, sample};
    use std::f64::consts::PI;

    fn se() -> CovarianceModel {
        CovarianceModel::squared_exponential(1.0).unwrap()
    }

    #[test]
    fn squared_exponential_embeds_cleanly() {
        let s = GridSampler1D::build(&se(), 5.0, 4096, 4).unwrap();
        assert_eq!(s.clamped_mass(), 0.0);
        assert_eq!(s.pad_factor(), 4);
        assert!(s.spectrum().iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn cosine_spectrum_has_two_lines() {
        let cos = CovarianceModel::cosine_mixture(vec![1.0], vec![1.0]).unwrap();
        let s = GridSampler1D::build(&cos, 2.0 * PI, 4096, 4).unwrap();
        let max = s.spectrum().iter().cloned().fold(0.0, f64::max);
        let lines = s.spectrum().iter().filter(|l| **l > 1e-9 * max).count();
        assert_eq!(lines, 2);
        assert_eq!(s.clamped_mass(), 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            GridSampler1D::build(&se(), 5.0, 1000, 4),
            Err(SimError::InvalidGrid(_))
        ));
        assert!(GridSampler1D::build(&se(), 5.0, 512, 4).is_err());
        assert!(GridSampler1D::build(&se(), 5.0, 1024, 1).is_err());
        assert!(GridSampler1D::build(&se(), -1.0, 1024, 2).is_err());
    }

    #[test]
    fn incommensurate_periodic_covariance_fails_with_diagnostics() {
        // cos(t) on a circle that is not a whole number of periods has large negative lobes
        let cos = CovarianceModel::cosine_mixture(vec![1.0], vec![1.0]).unwrap();
        let err = GridSampler1D::build(&cos, 7.3, 1024, 2).unwrap_err();
        assert!(matches!(err, SimError::Embedding { .. }), "{err}");
    }

    #[test]
    fn streams_are_deterministic() {
        let s = GridSampler1D::build(&se(), 5.0, 1024, 4).unwrap();
        let a: Vec<_> = sample(&s, 600, 42).collect();
        let b: Vec<_> = sample(&s, 600, 42).collect();
        assert_eq!(a.len(), 600);
        assert_eq!(a, b);
        let c: Vec<_> = sample(&s, 600, 43).take(1).collect();
        assert_ne!(a[0].values, c[0].values);
        assert_eq!(a[300].lineage.chunk, 1);
        assert_eq!(a[300].lineage.index, 44);
    }

    #[test]
    fn fold_matches_stream_order() {
        let s = GridSampler1D::build(&se(), 5.0, 1024, 4).unwrap();
        let streamed: Vec<f64> = sample(&s, 777, 9).map(|r| r.values[100]).collect();
        let folded = fold_paths(
            &s,
            777,
            9,
            Vec::new,
            |acc: &mut Vec<f64>, r| acc.push(r.values[100]),
            |acc, part| acc.extend(part),
        );
        assert_eq!(streamed, folded);
    }
}
