use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::context::FeatureContext;
use crate::error::{Error, Result};
use crate::market_data::CreationTime;

/// Raw `(n + 1) x m` design for one forecast; the last row is the prediction point.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub feature_names: Arc<Vec<String>>,
    /// Delivery day of each row, oldest first.
    pub days: Vec<NaiveDate>,
    pub rows: Vec<Vec<Option<f64>>>,
    /// Targets of the training rows (the prediction row's target is withheld).
    pub targets: Vec<Option<f64>>,
}

impl DesignMatrix {
    pub fn n_train(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// The same design restricted to the given columns.
    pub fn restrict(&self, columns: &[usize]) -> DesignMatrix {
        DesignMatrix {
            feature_names: Arc::new(columns.iter().map(|&j| self.feature_names[j].clone()).collect()),
            days: self.days.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| columns.iter().map(|&j| r[j]).collect())
                .collect(),
            targets: self.targets.clone(),
        }
    }
}

/// Builds `X(d, h, tau)` with `n` history rows: row `k` days back uses the
/// creation time shifted back `k` days on the local clock.
pub fn build_design(
    ctx: &FeatureContext,
    day: NaiveDate,
    hour: u8,
    tau: CreationTime,
    n: usize,
    min_history: usize,
) -> Result<DesignMatrix> {
    if n < min_history {
        return Err(Error::InsufficientHistory(format!(
            "{n} history days requested, at least {min_history} required"
        )));
    }
    let mut days = Vec::with_capacity(n + 1);
    let mut rows = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(n);
    for k in (0..=n as i64).rev() {
        let d = day - Duration::days(k);
        let t = tau.shift_days(-k);
        days.push(d);
        rows.push(ctx.full_row(d, hour, &t));
        if k > 0 {
            // A training target is usable only if it was final at the forecast's creation time.
            targets.push(ctx.eod_idfull_known(d, hour, &tau));
        }
    }
    Ok(DesignMatrix {
        feature_names: ctx.feature_names(),
        days,
        rows,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// Features missing in more than this fraction of training rows are dropped.
    pub max_missing_fraction: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_missing_fraction: 0.2,
        }
    }
}

/// Cleaned and standardised design ready for selection and sampling.
#[derive(Debug, Clone)]
pub struct CleanDesign {
    pub feature_names: Vec<String>,
    /// Column index of each retained feature in the raw design.
    pub columns: Vec<usize>,
    /// Index (into the raw rows) of each retained training row.
    pub train_rows: Vec<usize>,
    pub x_train: DMatrix<f64>,
    pub y_train: DVector<f64>,
    pub x_new: DVector<f64>,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl CleanDesign {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn destandardise(&self, z: f64) -> f64 {
        self.y_mean + self.y_std * z
    }

    pub fn standardise_target(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Drops sparse features and incomplete rows, then standardises with
/// training-row statistics and removes constant columns.
///
/// Features missing in more than `max_missing_fraction` of training rows or in
/// the prediction row are dropped first; training rows with any remaining gap
/// or without target are dropped next.
pub fn clean_and_standardise(design: &DesignMatrix, cfg: &CleaningConfig) -> Result<CleanDesign> {
    let n_train = design.n_train();
    let m = design.n_features();
    let pred = &design.rows[n_train];
    let columns: Vec<usize> = (0..m)
        .filter(|&j| {
            if pred[j].is_none() {
                return false;
            }
            let missing = design.rows[..n_train].iter().filter(|r| r[j].is_none()).count();
            n_train > 0 && (missing as f64) <= cfg.max_missing_fraction * n_train as f64
        })
        .collect();
    let train_rows: Vec<usize> = (0..n_train)
        .filter(|&i| design.targets[i].is_some() && columns.iter().all(|&j| design.rows[i][j].is_some()))
        .collect();
    if train_rows.len() < 2 {
        return Err(Error::AllRowsDropped);
    }
    let value = |i: usize, j: usize| design.rows[i][j].expect("checked complete");
    let mut kept = Vec::new();
    let mut x_mean = Vec::new();
    let mut x_std = Vec::new();
    for &j in &columns {
        let (mu, sd) = mean_std(train_rows.iter().map(|&i| value(i, j)));
        // Constant (including all-zero) columns carry no information.
        if sd > 1e-12 * (1.0 + mu.abs()) {
            kept.push(j);
            x_mean.push(mu);
            x_std.push(sd);
        }
    }
    let (y_mean, y_std) = mean_std(train_rows.iter().map(|&i| design.targets[i].expect("checked")));
    if !(y_std > 0.0) {
        return Err(Error::DegenerateSeries("constant training target".into()));
    }
    let x_train = DMatrix::from_fn(train_rows.len(), kept.len(), |r, c| {
        (value(train_rows[r], kept[c]) - x_mean[c]) / x_std[c]
    });
    let y_train = DVector::from_iterator(
        train_rows.len(),
        train_rows.iter().map(|&i| (design.targets[i].expect("checked") - y_mean) / y_std),
    );
    let x_new = DVector::from_iterator(
        kept.len(),
        kept.iter().enumerate().map(|(c, &j)| (pred[j].expect("checked") - x_mean[c]) / x_std[c]),
    );
    Ok(CleanDesign {
        feature_names: kept.iter().map(|&j| design.feature_names[j].clone()).collect(),
        columns: kept,
        train_rows,
        x_train,
        y_train,
        x_new,
        x_mean,
        x_std,
        y_mean,
        y_std,
    })
}

/// Repeats cleaning on the raw design restricted to the selected features.
///
/// `selected` indexes the columns of `clean`; rows that were dropped only
/// because of unselected features come back.
pub fn reclean_selected(
    design: &DesignMatrix,
    clean: &CleanDesign,
    selected: &[usize],
    cfg: &CleaningConfig,
) -> Result<CleanDesign> {
    let raw_cols: Vec<usize> = selected.iter().map(|&s| clean.columns[s]).collect();
    let mut out = clean_and_standardise(&design.restrict(&raw_cols), cfg)?;
    out.columns = out.columns.iter().map(|&c| raw_cols[c]).collect();
    Ok(out)
}
