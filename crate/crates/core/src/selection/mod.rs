//! Feature selection on a standardised design.

mod lasso;
mod omp;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use lasso::{kkt_violation, lambda_grid, lambda_max, lasso_path, lasso_select, soft_threshold, CdSolver, LassoConfig};
pub use omp::{omp_select, OmpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Omp,
    Lasso,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omp" => Some(Self::Omp),
            "lasso" => Some(Self::Lasso),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Omp => "omp",
            Self::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Diagnostics {
    /// RSS before any selection and after each accepted step, plus the columns
    /// skipped by the conditioning guard.
    Omp { rss: Vec<f64>, skipped: Vec<usize> },
    Lasso {
        lambdas: Vec<f64>,
        cv_mse: Vec<f64>,
        chosen_lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    /// Column indices in selection order (OMP) or ascending (LASSO).
    pub selected: Vec<usize>,
    /// Fitted coefficients aligned with `selected`.
    pub coefficients: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SelectionResult {
    /// Writes the selection trace as CSV: OMP step/rss, or LASSO lambda/cv_mse.
    pub fn write_diagnostics<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.diagnostics {
            Diagnostics::Omp { rss, .. } => {
                w.write_record(["step", "feature", "rss"])?;
                for (k, r) in rss.iter().enumerate() {
                    let feat = if k == 0 { String::new() } else { self.selected[k - 1].to_string() };
                    w.write_record([k.to_string(), feat, r.to_string()])?;
                }
            }
            Diagnostics::Lasso { lambdas, cv_mse, chosen_lambda } => {
                w.write_record(["lambda", "cv_mse", "chosen"])?;
                for (l, e) in lambdas.iter().zip(cv_mse) {
                    w.write_record([l.to_string(), e.to_string(), (l == chosen_lambda).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the chosen selector with its default configuration.
pub fn select(method: Method, x: &nalgebra::DMatrix<f64>, y: &nalgebra::DVector<f64>) -> Result<SelectionResult> {
    match method {
        Method::Omp => omp_select(x, y, &OmpConfig::default()),
        Method::Lasso => lasso_select(x, y, &LassoConfig::default()),
    }
}
