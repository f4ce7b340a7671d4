use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Diagnostics, Method, SelectionResult};
use crate::error::{Error, Result};
use crate::linalg::{condition_number_sym, lstsq, select_columns};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    /// Maximum number of selected features.
    pub n_feat: usize,
    /// Stop when the relative RSS improvement of a step falls below this value.
    pub tol: f64,
    /// Candidates that push the active Gram matrix above this condition number are skipped.
    pub max_condition: f64,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self {
            n_feat: 20,
            tol: 1e-4,
            max_condition: 1e12,
        }
    }
}

/// Orthogonal matching pursuit on standardised columns.
///
/// Each step adds the column most correlated with the residual (lowest index on
/// ties), refits least squares on the active set and recomputes the residual. A
/// step whose relative RSS improvement is below `tol` is undone and ends the
/// search.
pub fn omp_select(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &OmpConfig) -> Result<SelectionResult> {
    let (n, m) = x.shape();
    if n == 0 {
        return Err(Error::InvalidInput("OMP needs at least one row".into()));
    }
    if cfg.n_feat == 0 {
        return Err(Error::InvalidInput("n_feat must be at least 1".into()));
    }
    let mut active: Vec<usize> = Vec::new();
    let mut skipped: Vec<usize> = Vec::new();
    let mut excluded = vec![false; m];
    let mut residual = y.clone();
    let mut rss = residual.norm_squared();
    let rss0 = rss;
    let mut rss_trace = vec![rss];
    let mut coef = DVector::zeros(0);
    let stop_rss = 1e-24 * rss0.max(f64::MIN_POSITIVE);

    while rss0 > 0.0 && active.len() < cfg.n_feat.min(m) && rss > stop_rss {
        let corr = x.tr_mul(&residual);
        let mut order: Vec<usize> = (0..m).filter(|&j| !excluded[j]).collect();
        // Stable sort keeps the lowest index first among equal correlations.
        order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()));
        let mut chosen = None;
        for j in order {
            if corr[j] == 0.0 {
                break;
            }
            let mut trial = active.clone();
            trial.push(j);
            let xa = select_columns(x, &trial);
            if condition_number_sym(&xa.tr_mul(&xa)) > cfg.max_condition {
                excluded[j] = true;
                skipped.push(j);
                continue;
            }
            chosen = Some((j, xa));
            break;
        }
        let Some((j, xa)) = chosen else { break };
        let w = lstsq(&xa, y);
        let new_residual = y - &xa * &w;
        let new_rss = new_residual.norm_squared();
        if (rss - new_rss) < cfg.tol * rss {
            break;
        }
        active.push(j);
        excluded[j] = true;
        residual = new_residual;
        rss = new_rss;
        coef = w;
        rss_trace.push(rss);
    }

    Ok(SelectionResult {
        method: Method::Omp,
        selected: active,
        coefficients: coef.iter().copied().collect(),
        diagnostics: Diagnostics::Omp {
            rss: rss_trace,
            skipped,
        },
    })
}
