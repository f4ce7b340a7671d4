use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use super::scenario::ScenarioSpec;
use crate::bayes::{empirical_prior, estimate_ppd, nuts_sample, ModelSpec, NutsStats, PredictiveMixture};
use crate::error::Result;
use crate::evaluation::{coverage_hits, crps, crps_grid};
use crate::features::{build_design, clean_and_standardise, reclean_selected, CleanDesign, FeatureContext};
use crate::market_data::{format_timestamp, ProductKey};
use crate::predictive::{rest_probs, spread_probs, summarise, DensityGrid};
use crate::selection::{lasso_select, omp_select, Method, SelectionResult};
use crate::synthetic::derive_seed;

/// Everything recorded about one forecast `(day, hour)` of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub scenario: String,
    pub date: NaiveDate,
    pub hour: u8,
    /// Creation time in UTC.
    pub creation_time: String,
    pub lag_hours: f64,
    pub selector: Method,
    pub features: Vec<String>,
    pub n_train: usize,
    pub point: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
    pub pi_alpha: f64,
    pub pi_fallback: bool,
    pub ppd_mean: f64,
    pub ppd_sd: f64,
    pub p_da: Option<f64>,
    pub live_idfull: Option<f64>,
    pub y_true: Option<f64>,
    /// `P(Y >= p_da)`.
    pub prob_spread_up: Option<f64>,
    /// `P(Y >= live idfull)`.
    pub prob_rest_up: Option<f64>,
    pub crps: Option<f64>,
    /// HDI coverage of `y_true` along the configured alpha grid.
    pub coverage: Vec<bool>,
    /// `(alpha, number of intervals)` at each cut level, highest cut first.
    pub hdi_trace: Vec<(f64, usize)>,
    pub sampler: NutsStats,
}

impl ForecastResult {
    pub fn key(&self) -> (NaiveDate, u8) {
        (self.date, self.hour)
    }
}

/// Seed of one forecast; independent of the scenario so that scenarios
/// forecasting the same product share random numbers.
pub fn forecast_seed(base: u64, day: NaiveDate, hour: u8) -> u64 {
    derive_seed(base, &[day.num_days_from_ce() as u64, hour as u64])
}

fn run_selection(method: Method, clean: &CleanDesign, cfg: &StudyConfig, seed: u64) -> Result<SelectionResult> {
    match method {
        Method::Omp => omp_select(&clean.x_train, &clean.y_train, &cfg.omp()),
        Method::Lasso => lasso_select(&clean.x_train, &clean.y_train, &cfg.lasso(seed)),
    }
}

/// Standardised predictive mixture of a cleaned design.
fn sample_ppd(clean: &CleanDesign, cfg: &StudyConfig, seed: u64) -> Result<(PredictiveMixture, NutsStats)> {
    let (prior, _) = empirical_prior(&clean.x_train, &clean.y_train, cfg.prior.beta, cfg.prior.sigma_w_mode)?;
    let spec = ModelSpec::new(&clean.x_train, &clean.y_train, prior)?;
    let samples = nuts_sample(&spec, cfg.sampler.samples, &cfg.nuts(), seed)?;
    let mix = estimate_ppd(&samples, clean.x_new.as_slice())?;
    Ok((mix, samples.stats))
}

/// Design, cleaning, selection, re-cleaning, sampling and summary for one product.
pub fn run_forecast(
    ctx: &FeatureContext,
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
    day: NaiveDate,
    hour: u8,
) -> Result<ForecastResult> {
    let tau = spec.creation_time(day, hour);
    let seed = forecast_seed(cfg.seed, day, hour);
    let t0 = Instant::now();
    let design = build_design(ctx, day, hour, tau, cfg.history_days, cfg.min_history)?;
    let clean = clean_and_standardise(&design, &cfg.cleaning)?;
    let t1 = Instant::now();
    let selection = run_selection(spec.selector, &clean, cfg, derive_seed(seed, &[1]))?;
    let reclean = reclean_selected(&design, &clean, &selection.selected, &cfg.cleaning)?;
    let t2 = Instant::now();
    let (mix, stats) = sample_ppd(&reclean, cfg, derive_seed(seed, &[2]))?;
    log::debug!(
        "{day} h{hour:02}: design {:?} ({}x{}), selection {:?}, sampling {:?}",
        t1 - t0,
        clean.x_train.nrows(),
        clean.x_train.ncols(),
        t2 - t1,
        t2.elapsed()
    );
    let mix = mix.destandardise(reclean.y_mean, reclean.y_std);
    let summary = summarise(&mix, &cfg.predictive())?;

    let live_idfull = ctx.live(day, hour, &tau).idfull;
    let p_da = ctx.da_price(day, hour, &tau);
    let y_true = ctx.eod_idfull(day, hour);
    let crps = y_true
        .map(|y| -> Result<f64> {
            if mix.len() <= cfg.evaluation.crps_exact_max_samples {
                Ok(crps(&mix, y))
            } else {
                Ok(crps_grid(&DensityGrid::from_mixture(&mix, cfg.predictive.grid_points)?, y))
            }
        })
        .transpose()?;
    let product = ProductKey::new(day, hour)?;
    Ok(ForecastResult {
        scenario: spec.name.clone(),
        date: day,
        hour,
        creation_time: format_timestamp(&tau.to_utc()),
        lag_hours: tau.hours_to_delivery(&product),
        selector: spec.selector,
        features: reclean.feature_names.clone(),
        n_train: reclean.train_rows.len(),
        point: summary.point,
        pi_lower: summary.interval.lower,
        pi_upper: summary.interval.upper,
        pi_alpha: summary.interval.alpha,
        pi_fallback: summary.interval.fallback,
        ppd_mean: mix.mean(),
        ppd_sd: mix.variance().sqrt(),
        p_da,
        live_idfull,
        y_true,
        prob_spread_up: p_da.map(|p| spread_probs(&mix, p)).transpose()?.map(|(_, up)| up),
        prob_rest_up: live_idfull.map(|l| rest_probs(&mix, Some(l))).transpose()?.map(|(_, up)| up),
        crps,
        coverage: y_true
            .map(|y| coverage_hits(&summary, y, &cfg.evaluation.alpha_grid))
            .unwrap_or_default(),
        hdi_trace: summary.hdi_family.iter().map(|h| (h.alpha, h.len())).collect(),
        sampler: stats,
    })
}
