//! Python bindings: index statistics, selection, predictive summaries, scores,
//! synthetic data and forecast studies. Structured results come back as dicts.

use std::path::PathBuf;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use cidcast_core::bayes::PredictiveMixture;
use cidcast_core::error::Error;
use cidcast_core::features::FeatureConfig;
use cidcast_core::market_data::{parse_transactions, CreationTime, MarketBooks, ProductKey};
use cidcast_core::predictive::{summarise, PredictiveConfig};
use cidcast_core::selection::{lasso_select, omp_select, LassoConfig, OmpConfig};
use cidcast_core::study::{self, DataRoots, ScenarioSpec, StudyConfig};
use cidcast_core::synthetic::{generate, SynthConfig};
use cidcast_core::evaluation;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    s.parse().map_err(|_| PyValueError::new_err(format!("invalid date `{s}`, expected YYYY-MM-DD")))
}

fn study_config(path: Option<PathBuf>) -> PyResult<StudyConfig> {
    match path {
        Some(p) => StudyConfig::load(p).map_err(err),
        None => Ok(StudyConfig::default()),
    }
}

fn design(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<(DMatrix<f64>, DVector<f64>)> {
    let n = x.len();
    let m = x.first().map_or(0, Vec::len);
    if n != y.len() || x.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("x must be a rectangular n x m list and y of length n"));
    }
    Ok((DMatrix::from_fn(n, m, |i, j| x[i][j]), DVector::from_vec(y)))
}

/// Index statistics of one product from a transaction CSV.
///
/// `minutes` is the creation time in minutes after midnight of the delivery
/// day (negative values reach into the previous day); end of day when omitted.
#[pyfunction]
#[pyo3(signature = (transactions, date, hour, minutes=None))]
fn index_stats<'py>(py: Python<'py>, transactions: PathBuf, date: &str, hour: u8, minutes: Option<i64>) -> PyResult<Bound<'py, PyAny>> {
    let day = parse_date(date)?;
    let key = ProductKey::new(day, hour).map_err(err)?;
    let parsed = parse_transactions(&transactions).map_err(err)?;
    let books = MarketBooks::from_transactions(&parsed.transactions);
    let stats = match minutes {
        Some(m) => books.live_stats(&key, CreationTime::new(day, m).to_utc()),
        None => books.eod_stats(&key),
    };
    to_py(py, &stats)
}

/// Greedy orthogonal matching pursuit on a standardised design.
#[pyfunction]
#[pyo3(signature = (x, y, n_feat=20, tol=1e-4))]
fn omp<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>, n_feat: usize, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let (x, y) = design(x, y)?;
    let cfg = OmpConfig { n_feat, tol, ..OmpConfig::default() };
    to_py(py, &omp_select(&x, &y, &cfg).map_err(err)?)
}

/// Cross-validated LASSO selection.
#[pyfunction]
#[pyo3(signature = (x, y, seed=0))]
fn lasso<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let (x, y) = design(x, y)?;
    let cfg = LassoConfig { seed, ..LassoConfig::default() };
    to_py(py, &lasso_select(&x, &y, &cfg).map_err(err)?)
}

/// Point forecast, prediction interval and HDI family of an equal-weight
/// Gaussian mixture.
#[pyfunction]
fn summarise_mixture<'py>(py: Python<'py>, means: Vec<f64>, stds: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let mix = PredictiveMixture::new(means, stds).map_err(err)?;
    to_py(py, &summarise(&mix, &PredictiveConfig::default()).map_err(err)?)
}

/// CRPS of an equal-weight Gaussian mixture at the observation `y`.
#[pyfunction]
fn crps(means: Vec<f64>, stds: Vec<f64>, y: f64) -> PyResult<f64> {
    let mix = PredictiveMixture::new(means, stds).map_err(err)?;
    Ok(evaluation::crps(&mix, y))
}

/// Diebold-Mariano test; one-sided alternative is that `a` has the larger loss.
#[pyfunction]
#[pyo3(signature = (loss_a, loss_b, horizon=1, one_sided=true))]
fn dm_test<'py>(py: Python<'py>, loss_a: Vec<f64>, loss_b: Vec<f64>, horizon: usize, one_sided: bool) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &evaluation::dm_test(&loss_a, &loss_b, horizon, one_sided).map_err(err)?)
}

/// Write a synthetic data set to `out` and return the generator settings used.
#[pyfunction]
#[pyo3(signature = (out, seed=0, days=None, start=None))]
fn synthesize<'py>(py: Python<'py>, out: PathBuf, seed: u64, days: Option<usize>, start: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SynthConfig { seed, ..SynthConfig::default() };
    cfg.days = days.unwrap_or(cfg.days);
    if let Some(s) = start {
        cfg.start = parse_date(s)?;
    }
    let data = py.detach(|| generate(&cfg)).map_err(err)?;
    data.write_dir(&out).map_err(err)?;
    to_py(py, &cfg)
}

/// Run (or resume) a forecast scenario into `out` and return the run report.
#[pyfunction]
#[pyo3(signature = (data, out, scenario, start, days, lag=1, samples=None, seed=None, hours=None, config=None))]
#[allow(clippy::too_many_arguments)]
fn forecast<'py>(
    py: Python<'py>,
    data: PathBuf,
    out: PathBuf,
    scenario: &str,
    start: &str,
    days: usize,
    lag: u32,
    samples: Option<usize>,
    seed: Option<u64>,
    hours: Option<Vec<u8>>,
    config: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = study_config(config)?;
    cfg.sampler.samples = samples.unwrap_or(cfg.sampler.samples);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.validate().map_err(err)?;
    let mut spec = ScenarioSpec::preset(scenario, lag, parse_date(start)?, days).map_err(err)?;
    if let Some(h) = hours {
        spec.hours = h;
    }
    spec.validate().map_err(err)?;
    let report = py
        .detach(|| {
            let input = study::load_data(&DataRoots::from_dir(&data), FeatureConfig::default())?;
            study::run(&input.context, &spec, &cfg, &out)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Summary scores of a study directory.
#[pyfunction]
#[pyo3(signature = (study_dir, config=None))]
fn score<'py>(py: Python<'py>, study_dir: PathBuf, config: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = study_config(config)?;
    to_py(py, &study::score_dir(&study_dir, &cfg).map_err(err)?.summary)
}

#[pymodule]
fn cidcast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(index_stats, m)?)?;
    m.add_function(wrap_pyfunction!(omp, m)?)?;
    m.add_function(wrap_pyfunction!(lasso, m)?)?;
    m.add_function(wrap_pyfunction!(summarise_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(crps, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    Ok(())
}
