//! Experiment configuration.
//!
//! The file is TOML restricted to five sections. Every key is listed below; anything else
//! is rejected.
//!
//! ```toml
//! [covariance]
//! family = "squared_exponential"   # or "cosine_mixture", "latitude_circle"
//! params = [1.0]                   # cosine_mixture: [a1, w1, a2, w2, ...]
//! normalize = false                # rescale time so that -R''(0) = 1
//!
//! [space]
//! shape = "interval"               # or "box", "convex_planar"
//! length = 5.0                     # interval
//! # sides = [2.0, 3.0]             # box
//! # area = 1.0                     # convex_planar (approx only)
//! # perimeter = 4.0
//!
//! [grid]
//! n_grid = 1024                    # points along the first axis
//! # n_grid_y = 1024                # box only, defaults to n_grid
//! pad_factor = 4
//!
//! [mc]
//! n_paths = 100000
//! seed = 0
//! u = [1.5, 2.0, 2.5]
//!
//! [fit]
//! min_signal_k = 3.0
//! tol_exp = 0.15
//! c = 1.0                          # constant of the finite-KL chi-square bound
//! ```
//!
//! Lengths are in the time units of the covariance as built, i.e. after normalization when
//! `normalize = true`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceModel, CovarianceSpec};
use crate::ec_heuristic::Shape;

pub const MIN_PATHS: usize = 10_000;
pub const DEFAULT_MIN_SIGNAL_K: f64 = 3.0;
pub const DEFAULT_TOL_EXP: f64 = 0.15;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    covariance: RawCovariance,
    space: RawSpace,
    #[serde(default)]
    grid: RawGrid,
    mc: RawMc,
    #[serde(default)]
    fit: RawFit,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovariance {
    family: String,
    params: Vec<f64>,
    #[serde(default)]
    normalize: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    shape: String,
    length: Option<f64>,
    sides: Option<Vec<f64>>,
    area: Option<f64>,
    perimeter: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    n_grid: usize,
    n_grid_y: Option<usize>,
    pad_factor: usize,
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid {
            n_grid: 1024,
            n_grid_y: None,
            pad_factor: 4,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    n_paths: usize,
    #[serde(default)]
    seed: u64,
    u: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawFit {
    min_signal_k: f64,
    tol_exp: f64,
    c: f64,
}

impl Default for RawFit {
    fn default() -> Self {
        RawFit {
            min_signal_k: DEFAULT_MIN_SIGNAL_K,
            tol_exp: DEFAULT_TOL_EXP,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub covariance: CovarianceSpec,
    pub space: Shape,
    /// Strictly ascending, all positive.
    pub u_grid: Vec<f64>,
    pub n_paths: usize,
    pub n_grid: usize,
    /// Second grid axis for boxes; 1 for intervals.
    pub n_grid_y: usize,
    pub pad_factor: usize,
    pub master_seed: u64,
    pub min_signal_k: f64,
    pub tol_exp: f64,
    /// Constant of the finite-KL chi-square bound.
    pub kl_constant: f64,
}

impl ExperimentConfig {
    /// Defaults for everything but the model, the space, the levels and the path count.
    pub fn new(covariance: CovarianceSpec, space: Shape, u_grid: Vec<f64>, n_paths: usize) -> Self {
        let n_grid_y = if space.dimension() == 1 { 1 } else { 512 };
        let n_grid = if space.dimension() == 1 { 1024 } else { 512 };
        ExperimentConfig {
            covariance,
            space,
            u_grid,
            n_paths,
            n_grid,
            n_grid_y,
            pad_factor: 4,
            master_seed: 0,
            min_signal_k: DEFAULT_MIN_SIGNAL_K,
            tol_exp: DEFAULT_TOL_EXP,
            kl_constant: 1.0,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    /// Checks the invariants that do not depend on the sampler.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_paths < MIN_PATHS {
            return invalid(format!(
                "n_paths must be >= {MIN_PATHS}, got {}",
                self.n_paths
            ));
        }
        if self.u_grid.is_empty() {
            return invalid("u grid is empty");
        }
        if !self.u_grid.iter().all(|u| u.is_finite() && *u > 0.0) {
            return invalid("all levels u must be finite and > 0");
        }
        if !self.u_grid.windows(2).all(|w| w[0] < w[1]) {
            return invalid("u grid must be strictly ascending");
        }
        if !(self.min_signal_k.is_finite() && self.min_signal_k >= 0.0) {
            return invalid("min_signal_k must be >= 0");
        }
        if !(0.0..1.0).contains(&self.tol_exp) {
            return invalid("tol_exp must lie in [0, 1)");
        }
        if !(self.kl_constant.is_finite() && self.kl_constant > 0.0) {
            return invalid("c must be positive");
        }
        self.model()?;
        Ok(())
    }

    /// The covariance as written, in the units of the space.
    pub fn model(&self) -> Result<CovarianceModel, ConfigError> {
        self.covariance
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

impl std::str::FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let s = raw.space;
        let space = match s.shape.as_str() {
            "interval" => match (s.length, &s.sides, s.area, s.perimeter) {
                (Some(length), None, None, None) => Shape::Interval { length },
                _ => return invalid("interval takes exactly `length`"),
            },
            "box" => match (s.length, s.sides, s.area, s.perimeter) {
                (None, Some(sides), None, None) => Shape::Box { sides },
                _ => return invalid("box takes exactly `sides`"),
            },
            "convex_planar" => match (s.length, &s.sides, s.area, s.perimeter) {
                (None, None, Some(area), Some(perimeter)) => {
                    Shape::ConvexPlanar { area, perimeter }
                }
                _ => return invalid("convex_planar takes exactly `area` and `perimeter`"),
            },
            other => return invalid(format!("unknown shape `{other}`")),
        };
        let n_grid_y = match (&space, raw.grid.n_grid_y) {
            (Shape::Interval { .. }, None) => 1,
            (Shape::Interval { .. }, Some(_)) => return invalid("n_grid_y applies to boxes only"),
            (_, y) => y.unwrap_or(raw.grid.n_grid),
        };
        let config = ExperimentConfig {
            covariance: CovarianceSpec {
                family: raw.covariance.family,
                params: raw.covariance.params,
                normalize: raw.covariance.normalize,
            },
            space,
            u_grid: raw.mc.u,
            n_paths: raw.mc.n_paths,
            n_grid: raw.grid.n_grid,
            n_grid_y,
            pad_factor: raw.grid.pad_factor,
            master_seed: raw.mc.seed,
            min_signal_k: raw.fit.min_signal_k,
            tol_exp: raw.fit.tol_exp,
            kl_constant: raw.fit.c,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[covariance]
family = "squared_exponential"
params = [1.0]

[space]
shape = "interval"
length = 5.0

[mc]
n_paths = 20000
u = [1.5, 2.0]
"#;

    #[test]
    fn parses_with_defaults() {
        let c: ExperimentConfig = BASE.parse().unwrap();
        assert_eq!(c.space, Shape::Interval { length: 5.0 });
        assert_eq!((c.n_grid, c.n_grid_y, c.pad_factor), (1024, 1, 4));
        assert_eq!(c.master_seed, 0);
        assert_eq!(c.min_signal_k, 3.0);
        assert_eq!(c.tol_exp, 0.15);
        assert!(!c.covariance.normalize);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let extra_key = BASE.replace("length = 5.0", "length = 5.0\nwidth = 1.0");
        assert!(matches!(
            extra_key.parse::<ExperimentConfig>(),
            Err(ConfigError::Syntax(_))
        ));
        let extra_section = format!("{BASE}\n[plot]\ncolor = 1\n");
        assert!(extra_section.parse::<ExperimentConfig>().is_err());
        let typo = BASE.replace("n_paths", "npaths");
        assert!(typo.parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn enforces_invariants() {
        for (from, to) in [
            ("n_paths = 20000", "n_paths = 9999"),
            ("u = [1.5, 2.0]", "u = [2.0, 1.5]"),
            ("u = [1.5, 2.0]", "u = [1.5, 1.5]"),
            ("u = [1.5, 2.0]", "u = [0.0, 1.5]"),
            ("u = [1.5, 2.0]", "u = []"),
            ("params = [1.0]", "params = [-1.0]"),
            ("family = \"squared_exponential\"", "family = \"matern\""),
            ("length = 5.0", "sides = [1.0, 2.0]"),
        ] {
            let text = BASE.replace(from, to);
            assert!(
                matches!(
                    text.parse::<ExperimentConfig>(),
                    Err(ConfigError::Invalid(_))
                ),
                "{to}"
            );
        }
    }

    #[test]
    fn box_and_planar_spaces() {
        let boxed = BASE.replace(
            "shape = \"interval\"\nlength = 5.0",
            "shape = \"box\"\nsides = [2.0, 3.0]",
        );
        let c: ExperimentConfig = boxed.parse().unwrap();
        assert_eq!(
            c.space,
            Shape::Box {
                sides: vec![2.0, 3.0]
            }
        );
        assert_eq!(c.n_grid_y, c.n_grid);
        let planar = BASE.replace(
            "shape = \"interval\"\nlength = 5.0",
            "shape = \"convex_planar\"\narea = 1.0\nperimeter = 4.0",
        );
        assert!(planar.parse::<ExperimentConfig>().is_ok());
    }
}
