use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use super::forecast::{run_forecast, ForecastResult};
use super::scenario::ScenarioSpec;
use super::score::score_dir;
use crate::error::{Error, Result};
use crate::features::FeatureContext;

const FORECAST_DIR: &str = "forecasts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub date: NaiveDate,
    pub hour: u8,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total: usize,
    pub computed: usize,
    pub resumed: usize,
    pub failures: Vec<Failure>,
}

fn forecast_path(dir: &Path, day: NaiveDate, hour: u8) -> PathBuf {
    dir.join(FORECAST_DIR).join(format!("{day}_{hour:02}.json"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_forecast(path: &Path) -> Option<ForecastResult> {
    serde_json::from_reader(File::open(path).ok()?).ok()
}

/// Writes the scenario and config, or checks them against an existing study.
fn prepare_dir(dir: &Path, spec: &ScenarioSpec, cfg: &StudyConfig) -> Result<()> {
    fs::create_dir_all(dir.join(FORECAST_DIR))?;
    let scenario = serde_json::to_string_pretty(spec)?;
    // The worker count does not affect results, so it is not part of the study identity.
    let config = StudyConfig { workers: 0, ..cfg.clone() }.to_toml();
    for (name, text) in [("scenario.json", &scenario), ("config.toml", &config)] {
        let path = dir.join(name);
        match fs::read_to_string(&path) {
            Ok(existing) if existing != *text => {
                return Err(Error::Config(format!(
                    "{} holds a study with a different {name}",
                    dir.display()
                )));
            }
            Ok(_) => {}
            Err(_) => write_atomic(&path, text.as_bytes())?,
        }
    }
    Ok(())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every forecast of `spec` into `dir`, skipping forecasts already on
/// disk, then merges the results and writes the score tables.
///
/// A failing forecast is logged and recorded in `failures.csv`; the run carries on.
pub fn run(ctx: &FeatureContext, spec: &ScenarioSpec, cfg: &StudyConfig, dir: &Path) -> Result<RunReport> {
    spec.validate()?;
    cfg.validate()?;
    prepare_dir(dir, spec, cfg)?;
    let keys = spec.keys();
    let pending: Vec<(NaiveDate, u8)> = keys
        .iter()
        .copied()
        .filter(|&(d, h)| read_forecast(&forecast_path(dir, d, h)).is_none())
        .collect();
    log::info!(
        "scenario {}: {} forecasts, {} already done",
        spec.name,
        keys.len(),
        keys.len() - pending.len()
    );
    let outcomes: Vec<std::result::Result<(), Failure>> = thread_pool(cfg.workers)?.install(|| {
        pending
            .par_iter()
            .map(|&(day, hour)| {
                let result = run_forecast(ctx, spec, cfg, day, hour).and_then(|r| {
                    let json = serde_json::to_vec_pretty(&r)?;
                    write_atomic(&forecast_path(dir, day, hour), &json)
                });
                result.map_err(|e| {
                    log::error!("forecast {day} h{hour:02} failed: {e}");
                    Failure {
                        date: day,
                        hour,
                        error: e.to_string(),
                    }
                })
            })
            .collect()
    });
    let failures: Vec<Failure> = outcomes.into_iter().filter_map(|o| o.err()).collect();
    write_failures(dir, &failures)?;
    let results = load_results(dir, Some(&keys))?;
    write_forecast_csv(&mut BufWriter::new(File::create(dir.join("forecasts.csv"))?), &results)?;
    if results.iter().any(|r| r.y_true.is_some()) {
        score_dir(dir, cfg)?;
    }
    Ok(RunReport {
        total: keys.len(),
        computed: pending.len() - failures.len(),
        resumed: keys.len() - pending.len(),
        failures,
    })
}

fn write_failures(dir: &Path, failures: &[Failure]) -> Result<()> {
    let path = dir.join("failures.csv");
    if failures.is_empty() {
        if path.exists() {
            fs::remove_file(path)?;
        }
        return Ok(());
    }
    let mut w = csv::Writer::from_path(path)?;
    for f in failures {
        w.serialize(f)?;
    }
    w.flush()?;
    Ok(())
}

/// Forecast results stored in a study directory, ordered by key.
/// With `keys`, only those forecasts are loaded (missing ones are skipped).
pub fn load_results(dir: &Path, keys: Option<&[(NaiveDate, u8)]>) -> Result<Vec<ForecastResult>> {
    let mut out = Vec::new();
    match keys {
        Some(keys) => {
            for &(d, h) in keys {
                if let Some(r) = read_forecast(&forecast_path(dir, d, h)) {
                    out.push(r);
                }
            }
        }
        None => {
            let fdir = dir.join(FORECAST_DIR);
            if !fdir.is_dir() {
                return Err(Error::InvalidInput(format!("{} is not a study directory", dir.display())));
            }
            for entry in fs::read_dir(fdir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let r: ForecastResult = serde_json::from_reader(File::open(&path)?)?;
                    out.push(r);
                }
            }
        }
    }
    out.sort_by_key(|r| r.key());
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per forecast with the point, interval and probabilities.
pub fn write_forecast_csv<W: Write>(writer: W, results: &[ForecastResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "date",
        "hour",
        "scenario",
        "creation_time",
        "lag_hours",
        "selector",
        "n_features",
        "n_train",
        "point",
        "pi_lower",
        "pi_upper",
        "pi_alpha",
        "pi_fallback",
        "ppd_mean",
        "ppd_sd",
        "p_da",
        "live_idfull",
        "y_true",
        "prob_spread_up",
        "prob_rest_up",
        "crps",
        "step_size",
        "divergences",
        "features",
    ])?;
    for r in results {
        w.write_record([
            r.date.to_string(),
            r.hour.to_string(),
            r.scenario.clone(),
            r.creation_time.clone(),
            r.lag_hours.to_string(),
            r.selector.as_str().to_string(),
            r.features.len().to_string(),
            r.n_train.to_string(),
            r.point.to_string(),
            r.pi_lower.to_string(),
            r.pi_upper.to_string(),
            r.pi_alpha.to_string(),
            r.pi_fallback.to_string(),
            r.ppd_mean.to_string(),
            r.ppd_sd.to_string(),
            opt(r.p_da),
            opt(r.live_idfull),
            opt(r.y_true),
            opt(r.prob_spread_up),
            opt(r.prob_rest_up),
            opt(r.crps),
            r.sampler.step_size.to_string(),
            r.sampler.n_divergent.to_string(),
            r.features.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
