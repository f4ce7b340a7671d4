//! Forecast scenarios over a test period, their persisted results, scores and
//! pairwise comparisons.

mod audit;
mod compare;
mod config;
mod forecast;
mod run;
mod scenario;
mod score;

use std::fs::File;
use std::path::{Path, PathBuf};

pub use audit::{audit_sample, leakage_audit, AuditReport};
pub use compare::{compare, compare_results, write_dm_csv, DmCell, DM_SCORES};
pub use config::{
    EvaluationSettings, PredictiveSettings, PriorSettings, SamplerSettings, SelectionSettings, StudyConfig,
};
pub use forecast::{forecast_seed, run_forecast, ForecastResult};
pub use run::{load_results, run, write_forecast_csv, Failure, RunReport};
pub use scenario::{ScenarioKind, ScenarioSpec};
pub use score::{score_dir, score_results, ScoreRecord, ScoreSummary, ScoreTable};

use crate::error::{Error, Result};
use crate::features::{CovariateStore, FeatureConfig, FeatureContext};
use crate::market_data::{parse_transactions, MarketBooks};
use crate::merit_order::{read_curves, CurveBook};

/// Input files of a study. Curves and covariates are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRoots {
    pub transactions: PathBuf,
    pub curves: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

impl DataRoots {
    /// `transactions.csv`, `curves.csv` and `covariates.csv` in `dir`; the
    /// optional files are used when present.
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            transactions: dir.join("transactions.csv"),
            curves: optional("curves.csv"),
            covariates: optional("covariates.csv"),
        }
    }

    /// Applies `CIDCAST_TRANSACTIONS`, `CIDCAST_CURVES` and `CIDCAST_COVARIATES`.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(p) = std::env::var_os("CIDCAST_TRANSACTIONS") {
            self.transactions = p.into();
        }
        if let Some(p) = std::env::var_os("CIDCAST_CURVES") {
            self.curves = Some(p.into());
        }
        if let Some(p) = std::env::var_os("CIDCAST_COVARIATES") {
            self.covariates = Some(p.into());
        }
        self
    }
}

/// Parsed study inputs.
pub struct StudyData {
    pub context: FeatureContext,
    pub curves: CurveBook,
}

pub fn load_data(roots: &DataRoots, features: FeatureConfig) -> Result<StudyData> {
    let report = parse_transactions(&roots.transactions)?;
    if !report.skipped.is_empty() {
        log::warn!(
            "{}: skipped {} malformed rows",
            roots.transactions.display(),
            report.skipped.len()
        );
    }
    if report.transactions.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no transactions in {}",
            roots.transactions.display()
        )));
    }
    let books = MarketBooks::from_transactions(&report.transactions);
    let curves = match &roots.curves {
        Some(p) => read_curves(File::open(p)?)?,
        None => CurveBook::new(),
    };
    let covariates = match &roots.covariates {
        Some(p) => CovariateStore::load(p)?,
        None => CovariateStore::new(),
    };
    let context = FeatureContext::new(books, &curves, covariates, features);
    Ok(StudyData { context, curves })
}
