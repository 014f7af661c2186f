use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ecapprox::covariance::CovarianceSpec;
use ecapprox::critical_variance::{
    sigma_critical_finite_kl, CriticalVarianceReport, FiniteKlModel,
};
use ecapprox::ec_heuristic::{ec_approximation, ParameterSpace, Shape};
use ecapprox::experiment::output::{
    parse_grid_rows, write_approximation, write_json, write_table, TableFormat,
};
use ecapprox::experiment::{
    kl_bound_against_estimates, kl_dimension, sigma_for_config, simulate, validate_theorem,
    ConfigError, ExperimentConfig, ExperimentError,
};

#[derive(Parser, Debug)]
#[command(
    name = "ecapprox",
    version,
    about = "EC approximation of Gaussian suprema and its error exponent"
)]
struct Cli {
    /// Experiment config file (TOML with [covariance], [space], [grid], [mc], [fit]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `[mc] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Without it the main result goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

/// Covariance and interval given on the command line instead of a config file.
#[derive(clap::Args, Debug)]
struct InlineModel {
    /// Covariance family: squared_exponential, cosine_mixture or latitude_circle.
    #[arg(long)]
    family: Option<String>,
    /// Family parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    params: Vec<f64>,
    /// Rescale time so that -R''(0) = 1.
    #[arg(long)]
    normalize: bool,
    /// Interval length T.
    #[arg(long)]
    length: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the EC approximation term by term.
    Approx {
        #[command(flatten)]
        model: InlineModel,
        /// Levels, comma separated; default: the config's u grid.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        u: Vec<f64>,
    },
    /// Critical variance of a stationary model or of a sampled finite-KL curve.
    Sigma {
        #[command(flatten)]
        model: InlineModel,
        /// Rows of phi(s) on an equispaced grid of [0, 2 pi).
        #[arg(long)]
        grid_file: Option<PathBuf>,
        /// Rows of dphi/ds on the same grid; spectral differentiation when absent.
        #[arg(long, requires = "grid_file")]
        tangent_file: Option<PathBuf>,
    },
    /// Monte Carlo mean EC and tail probability per level.
    Simulate,
    /// Paired Diff(u) estimates, exponent fit and verdict.
    Validate {
        /// Store the wall-clock runtime in validate.json (makes reruns differ).
        #[arg(long)]
        record_runtime: bool,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error: anyhow::Error = e.into();
        let code = if let Some(e) = error.downcast_ref::<ExperimentError>() {
            e.exit_code() as u8
        } else if error.is::<ConfigError>() {
            2
        } else {
            1
        };
        Failure { code, error }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        error: ConfigError::Invalid(msg.into()).into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let format = TableFormat::from(cli.format);
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
    }
    match &cli.command {
        Command::Approx { model, u } => {
            let (shape, covariance, config_u) = match load_config(cli)? {
                Some(c) => (
                    c.space.clone(),
                    c.model().map_err(ExperimentError::from)?,
                    c.u_grid,
                ),
                None => {
                    let (spec, length) = inline(model)?;
                    (
                        Shape::Interval { length },
                        spec.build().map_err(ExperimentError::from)?,
                        vec![],
                    )
                }
            };
            let levels = if u.is_empty() { config_u } else { u.clone() };
            if levels.is_empty() {
                return Err(invalid("no levels: pass --u or a config with [mc] u"));
            }
            let space =
                ParameterSpace::for_model(shape, &covariance).map_err(ExperimentError::from)?;
            let rows: Vec<_> = levels
                .iter()
                .map(|u| ec_approximation(&space, *u))
                .collect();
            let out = sink(cli, &format!("approx.{}", format.extension()))?;
            write_approximation(&rows, format, out)?;
        }
        Command::Sigma {
            model,
            grid_file,
            tangent_file,
        } => {
            let report = match grid_file {
                Some(path) => sigma_from_grid(path, tangent_file.as_deref())?,
                None => match load_config(cli)? {
                    Some(c) => sigma_for_config(&c)?,
                    None => {
                        let (spec, length) = inline(model)?;
                        let c = ExperimentConfig::new(
                            spec,
                            Shape::Interval { length },
                            vec![1.0],
                            10_000,
                        );
                        c.validate()?;
                        sigma_for_config(&c)?
                    }
                },
            };
            write_json(&report, sink(cli, "sigma.json")?)?;
        }
        Command::Simulate => {
            let config = require_config(cli)?;
            let rows = simulate(&config)?;
            write_table(
                &rows,
                format,
                sink(cli, &format!("simulate.{}", format.extension()))?,
            )?;
        }
        Command::Validate { record_runtime } => {
            let config = require_config(cli)?;
            let report = validate_theorem(&config)?;
            if report.sign_violations > 0 && report.dimension == 1 {
                log::error!(
                    "{} negative per-path differences on an interval",
                    report.sign_violations
                );
            }
            if let Some(dir) = &cli.out {
                let diff = BufWriter::new(File::create(
                    dir.join(format!("diff.{}", format.extension())),
                )?);
                write_table(&report.estimates, format, diff)?;
                let model = config.model().map_err(ExperimentError::from)?;
                if let Some(n) = kl_dimension(model.family()) {
                    if report.sigma.sigma_c_sq > 0.0 {
                        let rows = kl_bound_against_estimates(
                            n,
                            report.sigma.theta_c,
                            config.kl_constant,
                            &report.estimates,
                        )?;
                        let kl_bound = BufWriter::new(File::create(
                            dir.join(format!("kl_bound.{}", format.extension())),
                        )?);
                        write_table(&rows, format, kl_bound)?;
                    }
                }
            }
            write_json(
                &report.summary(*record_runtime),
                sink(cli, "validate.json")?,
            )?;
            if !report.verdict {
                log::warn!("fitted decay is slower than the bound allows");
            }
        }
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, Failure> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    Ok(Some(config))
}

fn require_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    load_config(cli)?.ok_or_else(|| invalid("this subcommand needs --config"))
}

fn inline(model: &InlineModel) -> Result<(CovarianceSpec, f64), Failure> {
    let family = model
        .family
        .clone()
        .ok_or_else(|| invalid("give --config, or --family/--params/--length"))?;
    let length = model
        .length
        .ok_or_else(|| invalid("--length is required with --family"))?;
    Ok((
        CovarianceSpec {
            family,
            params: model.params.clone(),
            normalize: model.normalize,
        },
        length,
    ))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_grid_rows(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn sigma_from_grid(
    points: &Path,
    tangents: Option<&Path>,
) -> Result<CriticalVarianceReport, Failure> {
    let phi = read_rows(points)?;
    let dphi = tangents.map(read_rows).transpose()?;
    let model = FiniteKlModel::from_samples(phi, dphi).map_err(|e| invalid(e.to_string()))?;
    Ok(sigma_critical_finite_kl(&model)?)
}

/// `--out/<name>` when an output directory was given, stdout otherwise.
fn sink(cli: &Cli, name: &str) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(dir) => Box::new(BufWriter::new(File::create(dir.join(name))?)),
        None => Box::new(io::stdout().lock()),
    })
}
