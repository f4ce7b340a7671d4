use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, Method, SelectionResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub folds: usize,
    pub n_lambdas: usize,
    /// Smallest penalty as a fraction of `lambda_max`.
    pub lambda_ratio: f64,
    /// Shuffle rows before splitting into folds instead of contiguous time blocks.
    pub shuffle: bool,
    pub seed: u64,
    /// Coordinate descent stops when no coefficient moves by more than this.
    pub tol: f64,
    /// Threshold for the cross-validation fits, which only rank penalties.
    pub cv_tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            n_lambdas: 100,
            lambda_ratio: 1e-3,
            shuffle: false,
            seed: 0,
            tol: 1e-8,
            cv_tol: 1e-6,
            max_sweeps: 100_000,
        }
    }
}

/// `max_j |x_j' y| / n`, the smallest penalty with an all-zero solution.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.tr_mul(y).amax() / n
}

/// Log-spaced penalties from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lmax: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lmax];
    }
    let (a, b) = (lmax.ln(), (lmax * ratio).ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Indices of columns that exactly repeat an earlier column.
fn duplicate_columns(x: &DMatrix<f64>) -> Vec<bool> {
    let m = x.ncols();
    let mut dup = vec![false; m];
    for j in 1..m {
        dup[j] = (0..j).any(|k| !dup[k] && x.column(k) == x.column(j));
    }
    dup
}

/// Coordinate-descent solver for `(1/2n)||y - Xw||^2 + lambda ||w||_1` on
/// precomputed `G = X'X/n` and `c = X'y/n`.
///
/// Columns repeating an earlier column are held at zero, so of a group of
/// identical columns only the lowest index can become active.
pub struct CdSolver {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    frozen: Vec<bool>,
    w: DVector<f64>,
    /// `G w`, maintained incrementally.
    gw: DVector<f64>,
    tol: f64,
    max_sweeps: usize,
}

impl CdSolver {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, tol: f64, max_sweeps: usize) -> Self {
        let n = x.nrows() as f64;
        let m = x.ncols();
        Self {
            gram: x.tr_mul(x) / n,
            xty: x.tr_mul(y) / n,
            frozen: duplicate_columns(x),
            w: DVector::zeros(m),
            gw: DVector::zeros(m),
            tol,
            max_sweeps,
        }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let gjj = self.gram[(j, j)];
        if self.frozen[j] || gjj <= 0.0 {
            return 0.0;
        }
        let old = self.w[j];
        let rho = self.xty[j] - self.gw[j] + gjj * old;
        let new = soft_threshold(rho, lambda) / gjj;
        let delta = new - old;
        if delta != 0.0 {
            self.w[j] = new;
            self.gw.axpy(delta, &self.gram.column(j), 1.0);
        }
        delta.abs() * gjj.sqrt()
    }

    /// Solves at `lambda`, warm-starting from the current coefficients.
    pub fn solve(&mut self, lambda: f64) -> &DVector<f64> {
        let m = self.w.len();
        for _ in 0..self.max_sweeps {
            let mut max_delta = 0.0f64;
            for j in 0..m {
                max_delta = max_delta.max(self.update(j, lambda));
            }
            if max_delta <= self.tol {
                break;
            }
            // Iterate on the active set until it settles, then re-check all coordinates.
            let active: Vec<usize> = (0..m).filter(|&j| self.w[j] != 0.0).collect();
            for _ in 0..self.max_sweeps {
                let mut d = 0.0f64;
                for &j in &active {
                    d = d.max(self.update(j, lambda));
                }
                if d <= self.tol {
                    break;
                }
            }
        }
        &self.w
    }
}

pub fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coefficient path on the given penalties (assumed decreasing), with warm starts.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64], cfg: &LassoConfig) -> Vec<DVector<f64>> {
    let mut solver = CdSolver::new(x, y, cfg.tol, cfg.max_sweeps);
    lambdas.iter().map(|&l| solver.solve(l).clone()).collect()
}

fn fold_assignment(n: usize, cfg: &LassoConfig) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }
    let mut fold = vec![0; n];
    for (pos, &row) in idx.iter().enumerate() {
        fold[row] = pos * cfg.folds / n;
    }
    fold
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Cross-validated LASSO selection on standardised `x` and centred `y`.
///
/// The penalty grid comes from the full data. Within each training fold `x`
/// and `y` are re-centred; the held-out fold is predicted with the training
/// means. The penalty with the lowest mean CV squared error (the larger one on
/// ties) is refit on all rows and its non-zero coefficients are selected.
pub fn lasso_select(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &LassoConfig) -> Result<SelectionResult> {
    let (n, m) = x.shape();
    if cfg.folds < 2 {
        return Err(Error::InvalidInput("LASSO CV needs at least 2 folds".into()));
    }
    if n < cfg.folds {
        return Err(Error::InvalidInput(format!("{n} rows fewer than {} folds", cfg.folds)));
    }
    let lmax = lambda_max(x, y);
    if m == 0 || lmax == 0.0 {
        return Ok(SelectionResult {
            method: Method::Lasso,
            selected: Vec::new(),
            coefficients: Vec::new(),
            diagnostics: Diagnostics::Lasso {
                lambdas: vec![lmax],
                cv_mse: vec![f64::NAN],
                chosen_lambda: lmax,
            },
        });
    }
    let lambdas = lambda_grid(lmax, cfg.n_lambdas, cfg.lambda_ratio);
    let fold = fold_assignment(n, cfg);
    let mut cv_sse = vec![0.0; lambdas.len()];
    for f in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let mut xt = rows(x, &train);
        let mut yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let x_mean: Vec<f64> = xt.column_iter().map(|c| c.mean()).collect();
        let y_mean = yt.mean();
        for (j, mut c) in xt.column_iter_mut().enumerate() {
            c.add_scalar_mut(-x_mean[j]);
        }
        yt.add_scalar_mut(-y_mean);
        let path = lasso_path(&xt, &yt, &lambdas, &LassoConfig { tol: cfg.cv_tol, ..*cfg });
        for (k, w) in path.iter().enumerate() {
            for &i in &test {
                let pred = y_mean + (0..m).map(|j| (x[(i, j)] - x_mean[j]) * w[j]).sum::<f64>();
                cv_sse[k] += (y[i] - pred).powi(2);
            }
        }
    }
    let cv_mse: Vec<f64> = cv_sse.iter().map(|s| s / n as f64).collect();
    let best = (0..lambdas.len()).fold(0, |b, k| if cv_mse[k] < cv_mse[b] { k } else { b });
    let path = lasso_path(x, y, &lambdas[..=best], cfg);
    let w = path.last().expect("non-empty path");
    let selected: Vec<usize> = (0..m).filter(|&j| w[j] != 0.0).collect();
    let chosen_lambda = lambdas[best];
    Ok(SelectionResult {
        method: Method::Lasso,
        coefficients: selected.iter().map(|&j| w[j]).collect(),
        selected,
        diagnostics: Diagnostics::Lasso {
            lambdas,
            cv_mse,
            chosen_lambda,
        },
    })
}

/// Largest violation of the LASSO optimality conditions at `lambda`:
/// `|x_j' r / n| <= lambda` for zero coefficients and `x_j' r / n = lambda sign(w_j)` otherwise.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = y - x * w;
    let g = x.tr_mul(&r) / n;
    (0..w.len())
        .map(|j| {
            if w[j] == 0.0 {
                (g[j].abs() - lambda).max(0.0)
            } else {
                (g[j] - lambda * w[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}
