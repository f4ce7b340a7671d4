use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::{NutsConfig, SigmaWMode, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::evaluation::default_alpha_grid;
use crate::features::CleaningConfig;
use crate::market_data::DEFAULT_GRID_SIZE;
use crate::predictive::{PredictiveConfig, DEFAULT_CUT_LEVELS, DEFAULT_FALLBACK_ALPHA, DEFAULT_GRID_POINTS};
use crate::selection::{LassoConfig, OmpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSettings {
    pub n_feat: usize,
    pub omp_tol: f64,
    pub lasso_folds: usize,
    pub lasso_lambdas: usize,
    pub lasso_lambda_ratio: f64,
    pub lasso_shuffle: bool,
    /// Coordinate-descent convergence threshold; bounds the KKT violation of the solution.
    pub lasso_tol: f64,
    /// Convergence threshold of the cross-validation fits.
    pub lasso_cv_tol: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        let omp = OmpConfig::default();
        let lasso = LassoConfig::default();
        Self {
            n_feat: omp.n_feat,
            omp_tol: omp.tol,
            lasso_folds: lasso.folds,
            lasso_lambdas: lasso.n_lambdas,
            lasso_lambda_ratio: lasso.lambda_ratio,
            lasso_shuffle: lasso.shuffle,
            lasso_tol: lasso.tol,
            lasso_cv_tol: lasso.cv_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSettings {
    /// Rate of the Gamma prior on sigma; the shape is `beta + 1`.
    pub beta: f64,
    pub sigma_w_mode: SigmaWMode,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            sigma_w_mode: SigmaWMode::Variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub samples: usize,
    pub burn_in: usize,
    pub init_step: f64,
    pub target_accept: f64,
    pub max_depth: usize,
}

impl SamplerSettings {
    /// Draws per forecast at desk scale.
    pub const DESK_SAMPLES: usize = 4_000;
    /// Draws per forecast at the scale of the original study.
    pub const PAPER_SAMPLES: usize = 140_000;
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let nuts = NutsConfig::default();
        Self {
            samples: Self::DESK_SAMPLES,
            burn_in: nuts.burn_in,
            init_step: nuts.init_step,
            target_accept: nuts.target_accept,
            max_depth: nuts.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveSettings {
    pub grid_points: usize,
    pub cut_levels: usize,
    pub fallback_alpha: f64,
}

impl Default for PredictiveSettings {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            cut_levels: DEFAULT_CUT_LEVELS,
            fallback_alpha: DEFAULT_FALLBACK_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub alpha_grid: Vec<f64>,
    /// Credibility thresholds of the spread-sign estimator.
    pub p0_levels: Vec<f64>,
    pub dm_horizon: usize,
    /// Above this many draws CRPS is integrated on the density grid instead of
    /// using the quadratic-cost closed form.
    pub crps_exact_max_samples: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            alpha_grid: default_alpha_grid(),
            p0_levels: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            dm_horizon: 1,
            crps_exact_max_samples: 10_000,
        }
    }
}

/// Every tunable constant of a study, with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    /// Creation-time grid size of the `index` command.
    pub live_grid_size: usize,
    /// History days `n` per forecast.
    pub history_days: usize,
    pub min_history: usize,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Share of forecasts re-checked by the leakage audit.
    pub audit_fraction: f64,
    pub cleaning: CleaningConfig,
    pub selection: SelectionSettings,
    pub prior: PriorSettings,
    pub sampler: SamplerSettings,
    pub predictive: PredictiveSettings,
    pub evaluation: EvaluationSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            live_grid_size: DEFAULT_GRID_SIZE,
            history_days: 365,
            min_history: 30,
            workers: 0,
            audit_fraction: 0.01,
            cleaning: CleaningConfig::default(),
            selection: SelectionSettings::default(),
            prior: PriorSettings::default(),
            sampler: SamplerSettings::default(),
            predictive: PredictiveSettings::default(),
            evaluation: EvaluationSettings::default(),
        }
    }
}

impl StudyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.history_days < self.min_history || self.min_history == 0 {
            return bad("history_days must be at least min_history > 0".into());
        }
        if self.sampler.samples == 0 {
            return bad("sampler.samples must be positive".into());
        }
        if !(self.sampler.init_step > 0.0) || !(0.0 < self.sampler.target_accept && self.sampler.target_accept < 1.0) {
            return bad("invalid sampler step or target acceptance".into());
        }
        if self.selection.n_feat == 0 || self.selection.lasso_folds < 2 {
            return bad("n_feat must be positive and lasso_folds at least 2".into());
        }
        if !(self.selection.lasso_tol > 0.0) || !(self.selection.lasso_cv_tol > 0.0) || !(0.0 < self.selection.lasso_lambda_ratio && self.selection.lasso_lambda_ratio < 1.0) {
            return bad("lasso tolerances must be positive and lasso_lambda_ratio in (0, 1)".into());
        }
        if !(0.0 < self.predictive.fallback_alpha && self.predictive.fallback_alpha < 1.0) {
            return bad("fallback_alpha must lie in (0, 1)".into());
        }
        if self.predictive.cut_levels == 0 || self.predictive.grid_points < 3 {
            return bad("cut_levels and grid_points too small".into());
        }
        if let Some(p) = self.evaluation.p0_levels.iter().find(|p| !(0.5..=1.0).contains(*p)) {
            return bad(format!("p0 level {p} outside [0.5, 1]"));
        }
        if self.evaluation.alpha_grid.iter().any(|a| !(0.0 < *a && *a < 1.0)) {
            return bad("alpha grid values must lie in (0, 1)".into());
        }
        if self.evaluation.dm_horizon == 0 {
            return bad("dm_horizon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.audit_fraction) {
            return bad("audit_fraction must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.cleaning.max_missing_fraction) {
            return bad("max_missing_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn omp(&self) -> OmpConfig {
        OmpConfig {
            n_feat: self.selection.n_feat,
            tol: self.selection.omp_tol,
            ..OmpConfig::default()
        }
    }

    pub fn lasso(&self, seed: u64) -> LassoConfig {
        LassoConfig {
            folds: self.selection.lasso_folds,
            n_lambdas: self.selection.lasso_lambdas,
            lambda_ratio: self.selection.lasso_lambda_ratio,
            shuffle: self.selection.lasso_shuffle,
            seed,
            tol: self.selection.lasso_tol,
            cv_tol: self.selection.lasso_cv_tol,
            ..LassoConfig::default()
        }
    }

    pub fn nuts(&self) -> NutsConfig {
        NutsConfig {
            burn_in: self.sampler.burn_in,
            init_step: self.sampler.init_step,
            target_accept: self.sampler.target_accept,
            max_depth: self.sampler.max_depth,
            ..NutsConfig::default()
        }
    }

    pub fn predictive(&self) -> PredictiveConfig {
        PredictiveConfig {
            grid_points: self.predictive.grid_points,
            cut_levels: self.predictive.cut_levels,
            fallback_alpha: self.predictive.fallback_alpha,
        }
    }
}
