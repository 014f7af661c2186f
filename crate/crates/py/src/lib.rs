//! Python bindings. Structured results come back as plain dicts and lists with the same
//! keys as the CLI's JSON output.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;
use serde_json::Value;

use ecapprox::covariance::CovarianceSpec;
use ecapprox::critical_variance::{sigma_critical_finite_kl, FiniteKlModel};
use ecapprox::ec_heuristic::{ec_approximation as approximate, ParameterSpace, Shape};
use ecapprox::experiment::{self, ExperimentConfig, ExperimentError};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn experiment_error(e: ExperimentError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    match value {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

fn shape(length: Option<f64>, sides: Option<Vec<f64>>) -> PyResult<Shape> {
    match (length, sides) {
        (Some(length), None) => Ok(Shape::Interval { length }),
        (None, Some(sides)) => Ok(Shape::Box { sides }),
        _ => Err(PyValueError::new_err(
            "pass exactly one of `length` or `sides`",
        )),
    }
}

fn parse_config(text: &str, seed: Option<u64>) -> PyResult<ExperimentConfig> {
    let mut config: ExperimentConfig = text.parse().map_err(value_error)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

/// EC approximation at each level: a list of `(terms, total)` pairs.
#[pyfunction]
#[pyo3(signature = (family, params, u, length=None, sides=None, normalize=false))]
fn ec_approximation(
    family: String,
    params: Vec<f64>,
    u: Vec<f64>,
    length: Option<f64>,
    sides: Option<Vec<f64>>,
    normalize: bool,
) -> PyResult<Vec<(Vec<f64>, f64)>> {
    let model = CovarianceSpec {
        family,
        params,
        normalize,
    }
    .build()
    .map_err(value_error)?;
    let space = ParameterSpace::for_model(shape(length, sides)?, &model).map_err(value_error)?;
    Ok(u.iter()
        .map(|level| {
            let a = approximate(&space, *level);
            (a.terms, a.total)
        })
        .collect())
}

/// Critical variance for a stationary model on an interval or an isotropic model on a box.
#[pyfunction]
#[pyo3(signature = (family, params, length=None, sides=None, normalize=false))]
fn critical_variance<'py>(
    py: Python<'py>,
    family: String,
    params: Vec<f64>,
    length: Option<f64>,
    sides: Option<Vec<f64>>,
    normalize: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = CovarianceSpec {
        family,
        params,
        normalize,
    };
    let config = ExperimentConfig::new(spec, shape(length, sides)?, vec![1.0], 10_000);
    config.validate().map_err(value_error)?;
    let report = experiment::sigma_for_config(&config).map_err(experiment_error)?;
    to_py(py, &report)
}

/// Critical variance of `f(t) = <phi(t), xi>` from samples of `phi` on an equispaced grid
/// of a closed curve, optionally with tangents.
#[pyfunction]
#[pyo3(signature = (points, tangents=None))]
fn critical_variance_finite_kl<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    tangents: Option<Vec<Vec<f64>>>,
) -> PyResult<Bound<'py, PyAny>> {
    let model = FiniteKlModel::from_samples(points, tangents).map_err(value_error)?;
    let report =
        sigma_critical_finite_kl(&model).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &report)
}

/// Runs the mean-EC simulation for a TOML config; one dict per level.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn simulate<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let config = parse_config(config, seed)?;
    let rows = py
        .detach(|| experiment::simulate(&config))
        .map_err(experiment_error)?;
    to_py(py, &rows)
}

/// Runs the full validation for a TOML config and returns the summary record with the
/// per-level estimates under `estimates`.
#[pyfunction]
#[pyo3(signature = (config, seed=None))]
fn validate<'py>(py: Python<'py>, config: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let config = parse_config(config, seed)?;
    let report = py
        .detach(|| experiment::validate_theorem(&config))
        .map_err(experiment_error)?;
    let summary = to_py(py, &report.summary(true))?;
    summary.set_item("estimates", to_py(py, &report.estimates)?)?;
    Ok(summary)
}

#[pymodule]
fn ecapprox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ec_approximation, m)?)?;
    m.add_function(wrap_pyfunction!(critical_variance, m)?)?;
    m.add_function(wrap_pyfunction!(critical_variance_finite_kl, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
