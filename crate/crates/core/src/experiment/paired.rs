//! Paired Monte Carlo estimation of `E chi`, `P(sup >= u)` and their difference.
//!
//! Every level is evaluated on the same realizations, and per-path counts are
//! accumulated as integers, so the estimates do not depend on summation order.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ExperimentError;
use crate::covariance::IsotropicModel;
use crate::ec_heuristic::{ec_approximation, ParameterSpace, Shape};
use crate::field_sim::{
    excursion_ec_1d, excursion_ec_2d, fold_paths, sup_on_grid, FieldSampler, GridSampler1D,
    GridSampler2D, Realization,
};

/// Integer sums for one level over a set of paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSums {
    pub n: u64,
    pub ec: i64,
    pub ec_sq: i64,
    /// Paths with `sup >= u`. Indicators square to themselves.
    pub tail: i64,
    pub diff: i64,
    pub diff_sq: i64,
    /// Paths with `chi - 1{sup >= u} < 0`.
    pub negative_diff: u64,
}

impl LevelSums {
    fn add_path(&mut self, ec: i64, above: bool) {
        let ind = above as i64;
        let d = ec - ind;
        self.ec += ec;
        self.ec_sq += ec * ec;
        self.tail += ind;
        self.diff += d;
        self.diff_sq += d * d;
        self.negative_diff += (d < 0) as u64;
    }

    fn merge(&mut self, other: &LevelSums) {
        self.n += other.n;
        self.ec += other.ec;
        self.ec_sq += other.ec_sq;
        self.tail += other.tail;
        self.diff += other.diff;
        self.diff_sq += other.diff_sq;
        self.negative_diff += other.negative_diff;
    }

    /// Mean and standard error of a per-path integer quantity from its sums.
    /// The centred sum of squares `n * sum_sq - sum^2` is formed exactly in `i128`.
    fn mean_se(&self, sum: i64, sum_sq: i64) -> (f64, f64) {
        let n = self.n as i128;
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = sum as f64 / n as f64;
        if n < 2 {
            return (mean, f64::NAN);
        }
        let centred = n * sum_sq as i128 - (sum as i128) * (sum as i128);
        let var = centred as f64 / (n * (n - 1)) as f64;
        (mean, (var / n as f64).sqrt())
    }

    pub fn ec_mean_se(&self) -> (f64, f64) {
        self.mean_se(self.ec, self.ec_sq)
    }

    pub fn tail_mean_se(&self) -> (f64, f64) {
        self.mean_se(self.tail, self.tail)
    }

    pub fn diff_mean_se(&self) -> (f64, f64) {
        self.mean_se(self.diff, self.diff_sq)
    }
}

/// One row of `diff.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDiffEstimate {
    pub u: f64,
    pub diff_mean: f64,
    pub diff_se: f64,
    pub ec_mean: f64,
    pub tail_est: f64,
    pub n: u64,
}

impl PairedDiffEstimate {
    pub fn from_sums(u: f64, sums: &LevelSums) -> Self {
        let (diff_mean, diff_se) = sums.diff_mean_se();
        PairedDiffEstimate {
            u,
            diff_mean,
            diff_se,
            ec_mean: sums.ec_mean_se().0,
            tail_est: sums.tail_mean_se().0,
            n: sums.n,
        }
    }
}

/// One row of the `simulate` output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub u: f64,
    pub mean_ec: f64,
    pub se_ec: f64,
    pub tail_estimate: f64,
    pub se_tail: f64,
    pub n_paths: u64,
}

impl SimulationRow {
    pub fn from_sums(u: f64, sums: &LevelSums) -> Self {
        let (mean_ec, se_ec) = sums.ec_mean_se();
        let (tail_estimate, se_tail) = sums.tail_mean_se();
        SimulationRow {
            u,
            mean_ec,
            se_ec,
            tail_estimate,
            se_tail,
            n_paths: sums.n,
        }
    }
}

/// Simulated mean EC against the closed-form approximation at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcComparison {
    pub u: f64,
    pub mean_ec: f64,
    pub se_ec: f64,
    pub formula: f64,
}

impl EcComparison {
    /// `|mean_ec - formula| / se_ec`; infinite when the SE is zero and the values differ.
    pub fn z_score(&self) -> f64 {
        let gap = (self.mean_ec - self.formula).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.se_ec
        }
    }
}

/// Per-level sums for `levels` over `n_paths` realizations of `sampler`.
///
/// Levels need not be sorted or positive. On an interval the EC is the number of runs above
/// `u`; on a box it is the cubical `V - E + F`.
pub fn level_sums<S: FieldSampler>(
    sampler: &S,
    levels: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Vec<LevelSums> {
    let (nx, ny) = sampler.shape();
    let fold = |acc: &mut Vec<LevelSums>, r: &Realization| {
        let sup = sup_on_grid(&r.values);
        for (sums, u) in acc.iter_mut().zip(levels) {
            sums.n += 1;
            // the excursion set is empty above the maximum
            if sup < *u {
                continue;
            }
            let ec = if ny == 1 {
                excursion_ec_1d(&r.values, *u)
            } else {
                excursion_ec_2d(&r.values, nx, ny, *u)
            };
            sums.add_path(ec, true);
        }
    };
    fold_paths(
        sampler,
        n_paths,
        master_seed,
        || vec![LevelSums::default(); levels.len()],
        fold,
        |total, part| {
            for (t, p) in total.iter_mut().zip(&part) {
                t.merge(p);
            }
        },
    )
}

/// Sampler matching the configured space.
#[derive(Debug)]
pub enum ConfiguredSampler {
    Interval(GridSampler1D),
    Box(GridSampler2D),
}

impl ConfiguredSampler {
    pub fn build(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let model = config.model()?;
        match &config.space {
            Shape::Interval { length } => Ok(ConfiguredSampler::Interval(GridSampler1D::build(
                &model,
                *length,
                config.n_grid,
                config.pad_factor,
            )?)),
            Shape::Box { sides } if sides.len() == 2 => {
                let iso = IsotropicModel::new(model, 2)?;
                Ok(ConfiguredSampler::Box(GridSampler2D::build(
                    &iso,
                    (sides[0], sides[1]),
                    config.n_grid,
                    config.n_grid_y,
                    config.pad_factor,
                )?))
            }
            other => Err(ExperimentError::Unsupported(format!(
                "simulation supports intervals and 2D boxes, not {other:?}"
            ))),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ConfiguredSampler::Interval(_) => 1,
            ConfiguredSampler::Box(_) => 2,
        }
    }

    pub fn level_sums(&self, levels: &[f64], n_paths: usize, master_seed: u64) -> Vec<LevelSums> {
        match self {
            ConfiguredSampler::Interval(s) => level_sums(s, levels, n_paths, master_seed),
            ConfiguredSampler::Box(s) => level_sums(s, levels, n_paths, master_seed),
        }
    }
}

/// Paired estimates at every configured level, together with the raw sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub dimension: usize,
    pub sums: Vec<LevelSums>,
    pub estimates: Vec<PairedDiffEstimate>,
}

impl PairedRun {
    /// Paths with a negative paired difference, summed over levels. Always 0 on an interval.
    pub fn sign_violations(&self) -> u64 {
        self.sums.iter().map(|s| s.negative_diff).sum()
    }
}

/// `Diff(u)` by the paired per-path estimator `chi - 1{sup >= u}` at every configured level.
pub fn paired_diff(config: &ExperimentConfig) -> Result<PairedRun, ExperimentError> {
    config.validate()?;
    let sampler = ConfiguredSampler::build(config)?;
    let sums = sampler.level_sums(&config.u_grid, config.n_paths, config.master_seed);
    let run = PairedRun {
        dimension: sampler.dimension(),
        estimates: config
            .u_grid
            .iter()
            .zip(&sums)
            .map(|(u, s)| PairedDiffEstimate::from_sums(*u, s))
            .collect(),
        sums,
    };
    if run.dimension == 1 && run.sign_violations() > 0 {
        log::error!(
            "{} paths with chi < 1{{sup >= u}} on an interval; the EC count is broken",
            run.sign_violations()
        );
    }
    Ok(run)
}

/// Closed-form approximation at `u` for the configured model and space.
pub fn formula_value(config: &ExperimentConfig, u: f64) -> Result<f64, ExperimentError> {
    let space = ParameterSpace::for_model(config.space.clone(), &config.model()?)?;
    Ok(ec_approximation(&space, u).total)
}

/// Simulated mean EC against the closed-form approximation at every configured level.
pub fn mean_ec_vs_formula(config: &ExperimentConfig) -> Result<Vec<EcComparison>, ExperimentError> {
    config.validate()?;
    let sampler = ConfiguredSampler::build(config)?;
    let sums = sampler.level_sums(&config.u_grid, config.n_paths, config.master_seed);
    config
        .u_grid
        .iter()
        .zip(&sums)
        .map(|(u, s)| {
            let (mean_ec, se_ec) = s.ec_mean_se();
            Ok(EcComparison {
                u: *u,
                mean_ec,
                se_ec,
                formula: formula_value(config, *u)?,
            })
        })
        .collect()
}

/// Rows of the `simulate` output.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<SimulationRow>, ExperimentError> {
    config.validate()?;
    let sampler = ConfiguredSampler::build(config)?;
    let sums = sampler.level_sums(&config.u_grid, config.n_paths, config.master_seed);
    Ok(config
        .u_grid
        .iter()
        .zip(&sums)
        .map(|(u, s)| SimulationRow::from_sums(*u, s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sums_of(values: &[(i64, bool)]) -> LevelSums {
        let mut s = LevelSums::default();
        for (ec, above) in values {
            s.n += 1;
            s.add_path(*ec, *above);
        }
        s
    }

    #[test]
    fn moments_match_direct_computation() {
        let paths = [
            (0, false),
            (1, true),
            (2, true),
            (1, true),
            (0, false),
            (3, true),
        ];
        let s = sums_of(&paths);
        let d: Vec<f64> = paths.iter().map(|(e, a)| (*e - *a as i64) as f64).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (m, se) = s.diff_mean_se();
        assert!((m - mean).abs() < 1e-15);
        assert!((se - (var / n).sqrt()).abs() < 1e-15);
        let est = PairedDiffEstimate::from_sums(1.0, &s);
        assert!((est.ec_mean - est.tail_est - est.diff_mean).abs() < 1e-15);
    }

    #[test]
    fn empty_levels_give_zero_with_zero_se() {
        let s = sums_of(&[(0, false); 10]);
        assert_eq!(s.diff_mean_se(), (0.0, 0.0));
        assert_eq!(s.tail_mean_se(), (0.0, 0.0));
    }

    #[test]
    fn merge_is_addition() {
        let a = sums_of(&[(1, true), (2, true)]);
        let b = sums_of(&[(0, false), (-1, true)]);
        let mut m = a;
        m.merge(&b);
        assert_eq!(m, sums_of(&[(1, true), (2, true), (0, false), (-1, true)]));
        assert_eq!(m.negative_diff, 1);
    }
}
