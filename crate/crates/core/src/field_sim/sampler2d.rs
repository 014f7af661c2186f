//! Isotropic fields on a box by spectral synthesis on a padded torus.
//!
//! The torus has `pad * n` points per axis at the grid spacing, so its
//! frequencies are `2 pi k / L`. Each frequency gets weight
//! `S(|w|) * dw_x * dw_y`; modes whose weight is below `MODE_CUTOFF` of the
//! largest are dropped and their mass reported. Synthesis is a direct
//! separable sum over the retained modes, which for smooth covariances is far
//! cheaper than a full torus FFT.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::stream::FieldSampler;
use super::SimError;
use crate::covariance::IsotropicModel;

const MODE_CUTOFF: f64 = 1e-18;
const MIN_PAD: usize = 4;

struct ModeColumn {
    /// `exp(i w_x x_i)` for every grid column `i`.
    phase_x: Vec<Complex64>,
    /// `(index into phase_y, amplitude)` for the retained `w_y` at this `w_x`.
    modes: Vec<(usize, f64)>,
}

pub struct GridSampler2D {
    isotropic: IsotropicModel,
    sides: (f64, f64),
    nx: usize,
    ny: usize,
    pad_factor: usize,
    columns: Vec<ModeColumn>,
    /// `exp(i w_y y_j)` for every retained `w_y`, row-major `[ky][j]`.
    phase_y: Vec<Vec<Complex64>>,
    n_modes: usize,
    realized_variance: f64,
    dropped_mass: f64,
}

impl std::fmt::Debug for GridSampler2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridSampler2D")
            .field("sides", &self.sides)
            .field("grid", &(self.nx, self.ny))
            .field("pad_factor", &self.pad_factor)
            .field("n_modes", &self.n_modes)
            .field("realized_variance", &self.realized_variance)
            .finish()
    }
}

/// Signed torus frequency indices `-(M/2 - 1) ..= M/2 - 1`. The unpaired Nyquist index
/// is left out so the mode set stays symmetric.
fn torus_indices(m: usize) -> impl Iterator<Item = i64> {
    let half = (m / 2) as i64;
    -(half - 1)..half
}

impl GridSampler2D {
    pub fn build(
        isotropic: &IsotropicModel,
        sides: (f64, f64),
        nx: usize,
        ny: usize,
        pad_factor: usize,
    ) -> Result<Self, SimError> {
        if isotropic.dimension() != 2 {
            return Err(SimError::Unsupported(format!(
                "2D sampler needs a 2-dimensional isotropic model, got {}",
                isotropic.dimension()
            )));
        }
        if isotropic.spectral_density(0.0).is_none() {
            return Err(SimError::Unsupported(
                "2D simulation needs a closed-form radial spectral density (squared exponential)"
                    .into(),
            ));
        }
        if nx < 2 || ny < 2 {
            return Err(SimError::InvalidGrid(format!(
                "grid {nx}x{ny} is too small"
            )));
        }
        if pad_factor < MIN_PAD {
            return Err(SimError::InvalidGrid(format!(
                "2D pad_factor must be >= {MIN_PAD}, got {pad_factor}"
            )));
        }
        let (a, b) = sides;
        if !(a > 0.0 && b > 0.0) {
            return Err(SimError::InvalidGrid(format!(
                "box sides must be positive, got {sides:?}"
            )));
        }
        let (hx, hy) = (a / (nx - 1) as f64, b / (ny - 1) as f64);
        let (mx, my) = (pad_factor * nx, pad_factor * ny);
        let (dwx, dwy) = (
            2.0 * std::f64::consts::PI / (mx as f64 * hx),
            2.0 * std::f64::consts::PI / (my as f64 * hy),
        );
        let cell = dwx * dwy;
        let peak = isotropic.spectral_density(0.0).unwrap_or(0.0) * cell;
        let weight = |kx: i64, ky: i64| {
            let w = ((kx as f64 * dwx).powi(2) + (ky as f64 * dwy).powi(2)).sqrt();
            isotropic.spectral_density(w).unwrap_or(0.0) * cell
        };

        let mut total = 0.0;
        let mut kept = 0.0;
        let mut kept_ky: Vec<i64> = Vec::new();
        let mut raw_columns: Vec<(i64, Vec<(i64, f64)>)> = Vec::new();
        for kx in torus_indices(mx) {
            let mut modes = Vec::new();
            for ky in torus_indices(my) {
                let w = weight(kx, ky);
                total += w;
                if w >= MODE_CUTOFF * peak {
                    kept += w;
                    modes.push((ky, w.sqrt()));
                    if !kept_ky.contains(&ky) {
                        kept_ky.push(ky);
                    }
                }
            }
            if !modes.is_empty() {
                raw_columns.push((kx, modes));
            }
        }
        kept_ky.sort_unstable();
        let phase = |freq: f64, n: usize, h: f64| -> Vec<Complex64> {
            (0..n)
                .map(|j| Complex64::from_polar(1.0, freq * j as f64 * h))
                .collect()
        };
        let phase_y: Vec<Vec<Complex64>> = kept_ky
            .iter()
            .map(|ky| phase(*ky as f64 * dwy, ny, hy))
            .collect();
        let mut n_modes = 0;
        let columns = raw_columns
            .into_iter()
            .map(|(kx, modes)| {
                n_modes += modes.len();
                ModeColumn {
                    phase_x: phase(kx as f64 * dwx, nx, hx),
                    modes: modes
                        .into_iter()
                        .map(|(ky, amp)| (kept_ky.binary_search(&ky).unwrap_or(0), amp))
                        .collect(),
                }
            })
            .collect();
        let realized_variance = kept;
        let sampler = GridSampler2D {
            isotropic: isotropic.clone(),
            sides,
            nx,
            ny,
            pad_factor,
            columns,
            phase_y,
            n_modes,
            realized_variance,
            dropped_mass: total - kept,
        };
        if (realized_variance - 1.0).abs() > 0.01 {
            return Err(SimError::InvalidGrid(format!(
                "torus synthesis has marginal variance {realized_variance}, more than 1% from 1; \
                 refine the grid or enlarge pad_factor"
            )));
        }
        Ok(sampler)
    }

    pub fn isotropic(&self) -> &IsotropicModel {
        &self.isotropic
    }

    pub fn sides(&self) -> (f64, f64) {
        self.sides
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Marginal variance of the synthesized field, `sum` of retained weights.
    pub fn realized_variance(&self) -> f64 {
        self.realized_variance
    }

    /// Spectral mass of the dropped modes.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    /// Covariance of the synthesized field at displacement `(dx, dy)`.
    pub fn implied_covariance(&self, dx: usize, dy: usize) -> f64 {
        let mut c = 0.0;
        for col in &self.columns {
            for (ky, amp) in &col.modes {
                c += amp * amp * (col.phase_x[dx] * self.phase_y[*ky][dy]).re;
            }
        }
        c
    }
}

pub struct Scratch2D {
    row_sums: Vec<Complex64>,
}

impl FieldSampler for GridSampler2D {
    type Scratch = Scratch2D;

    fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn scratch(&self) -> Scratch2D {
        Scratch2D {
            row_sums: vec![Complex64::new(0.0, 0.0); self.ny],
        }
    }

    /// Real and imaginary parts of `sum sqrt(w_k) z_k exp(i <w_k, p>)` are independent fields
    /// because the mode set is symmetric under `k -> -k`.
    fn draw(&self, rng: &mut ChaCha8Rng, scratch: &mut Scratch2D, a: &mut [f64], b: &mut [f64]) {
        a.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        for col in &self.columns {
            scratch
                .row_sums
                .iter_mut()
                .for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (ky, amp) in &col.modes {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(amp * re, amp * im);
                for (s, p) in scratch.row_sums.iter_mut().zip(&self.phase_y[*ky]) {
                    *s += z * p;
                }
            }
            for (i, px) in col.phase_x.iter().enumerate() {
                let row_a = &mut a[i * self.ny..(i + 1) * self.ny];
                let row_b = &mut b[i * self.ny..(i + 1) * self.ny];
                for ((va, vb), s) in row_a
                    .iter_mut()
                    .zip(row_b.iter_mut())
                    .zip(&scratch.row_sums)
                {
                    let v = px * s;
                    *va += v.re;
                    *vb += v.im;
                }
            }
        }
    }
}
