use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::nuts::{self, LogDensity, NutsConfig, NutsStats};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

/// Smallest allowed prior standard deviation of a weight.
pub const SIGMA_W_FLOOR: f64 = 1e-6;
/// Default rate of the Gamma prior on the noise scale.
pub const DEFAULT_BETA: f64 = 0.5;
/// Diagonal jitter added to a singular `X'X`.
pub const GRAM_RIDGE: f64 = 1e-8;
const GRAM_MAX_CONDITION: f64 = 1e14;

/// How `(S/n) diag(C)` is turned into the per-weight prior scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaWMode {
    /// Treat it as a variance and take the square root.
    #[default]
    Variance,
    /// Use it directly as a standard deviation.
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaPrior {
    /// `Gamma(alpha, beta)` with rate `beta`.
    Gamma { alpha: f64, beta: f64 },
    /// Noise scale held fixed (point-mass prior); used to check the sampler
    /// against the conjugate Gaussian posterior.
    Fixed(f64),
}

impl SigmaPrior {
    /// Gamma prior with mode 1: `alpha = beta + 1`.
    pub fn unit_mode(beta: f64) -> Self {
        Self::Gamma { alpha: beta + 1.0, beta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mu_w: Vec<f64>,
    pub sigma_w: Vec<f64>,
    pub sigma: SigmaPrior,
}

/// Prior centred on the OLS estimate with scales from the OLS covariance.
///
/// Returns the prior and the ridge added to `X'X` (zero unless it was singular).
pub fn empirical_prior(x: &DMatrix<f64>, y: &DVector<f64>, beta: f64, mode: SigmaWMode) -> Result<(Prior, f64)> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} targets for {n} rows", y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empirical prior needs data".into()));
    }
    if beta <= 0.0 {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    let (c, ridge) = spd_inverse(&x.tr_mul(x), GRAM_MAX_CONDITION, GRAM_RIDGE);
    if ridge > 0.0 {
        log::warn!("X'X is singular or ill-conditioned; added {ridge:.1e} to its diagonal");
    }
    let mu = &c * x.tr_mul(y);
    let s = (y - x * &mu).dot(y);
    let sigma_w = (0..m)
        .map(|j| {
            let v = s / n as f64 * c[(j, j)];
            let sd = match mode {
                SigmaWMode::Variance => v.max(0.0).sqrt(),
                SigmaWMode::StdDev => v,
            };
            sd.max(SIGMA_W_FLOOR)
        })
        .collect();
    Ok((
        Prior {
            mu_w: mu.iter().copied().collect(),
            sigma_w,
            sigma: SigmaPrior::unit_mode(beta),
        },
        ridge,
    ))
}

/// Bayesian linear regression `y ~ N(Xw, sigma^2)` with independent Gaussian
/// weight priors and a Gamma prior on `sigma`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    prior: Prior,
}

impl ModelSpec {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, prior: Prior) -> Result<Self> {
        let (n, m) = x.shape();
        if y.len() != n || prior.mu_w.len() != m || prior.sigma_w.len() != m {
            return Err(Error::InvalidInput("model dimensions do not agree".into()));
        }
        if prior.sigma_w.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidInput("prior scales must be positive".into()));
        }
        match prior.sigma {
            SigmaPrior::Gamma { alpha, beta } if alpha > 0.0 && beta > 0.0 => {}
            SigmaPrior::Fixed(s) if s > 0.0 => {}
            _ => return Err(Error::InvalidInput("invalid noise prior".into())),
        }
        Ok(Self {
            n,
            xtx: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
            prior,
        })
    }

    pub fn n_features(&self) -> usize {
        self.xty.len()
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    fn rss(&self, w: &DVector<f64>) -> f64 {
        (self.yty - 2.0 * w.dot(&self.xty) + w.dot(&(&self.xtx * w))).max(0.0)
    }

    /// Log posterior at `(w, sigma)` with its gradient `(d/dw, d/dsigma)`.
    ///
    /// Includes the normalising constants of likelihood and priors but not the
    /// evidence. With a fixed noise scale the `sigma` prior contributes nothing
    /// and the `sigma` derivative is that of the likelihood.
    pub fn log_posterior(&self, w: &[f64], sigma: f64) -> Result<(f64, Vec<f64>, f64)> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        if w.len() != self.n_features() {
            return Err(Error::InvalidInput("weight vector has wrong length".into()));
        }
        let wv = DVector::from_column_slice(w);
        let n = self.n as f64;
        let rss = self.rss(&wv);
        let s2 = sigma * sigma;
        let mut value = -0.5 * n * (2.0 * PI).ln() - n * sigma.ln() - rss / (2.0 * s2);
        let mut dsigma = -n / sigma + rss / (s2 * sigma);
        let mut grad: Vec<f64> = ((&self.xty - &self.xtx * &wv) / s2).iter().copied().collect();
        for j in 0..w.len() {
            let (mu, sd) = (self.prior.mu_w[j], self.prior.sigma_w[j]);
            value += -0.5 * (2.0 * PI).ln() - sd.ln() - (w[j] - mu).powi(2) / (2.0 * sd * sd);
            grad[j] -= (w[j] - mu) / (sd * sd);
        }
        if let SigmaPrior::Gamma { alpha, beta } = self.prior.sigma {
            value += alpha * beta.ln() - ln_gamma(alpha) + (alpha - 1.0) * sigma.ln() - beta * sigma;
            dsigma += (alpha - 1.0) / sigma - beta;
        }
        Ok((value, grad, dsigma))
    }

    /// Conditional posterior of `w` given `sigma`: mean and covariance.
    pub fn conditional_posterior(&self, sigma: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.n_features();
        let s2 = sigma * sigma;
        let prec_prior = DVector::from_iterator(m, self.prior.sigma_w.iter().map(|s| 1.0 / (s * s)));
        let precision = &self.xtx / s2 + DMatrix::from_diagonal(&prec_prior);
        let (cov, _) = spd_inverse(&precision, f64::INFINITY, GRAM_RIDGE);
        let mu = DVector::from_column_slice(&self.prior.mu_w);
        let mean = &cov * (&self.xty / s2 + prec_prior.component_mul(&mu));
        (mean, cov)
    }

    /// Reference noise scale used to centre and scale the sampler.
    fn reference_sigma(&self) -> f64 {
        match self.prior.sigma {
            SigmaPrior::Fixed(s) => s,
            SigmaPrior::Gamma { alpha, beta } => {
                let mode = if alpha > 1.0 { (alpha - 1.0) / beta } else { 1.0 };
                if self.n == 0 {
                    return mode;
                }
                let (mean, _) = self.conditional_posterior(mode);
                let sd = (self.rss(&mean) / self.n as f64).sqrt();
                if sd.is_finite() && sd > 1e-8 {
                    sd
                } else {
                    mode
                }
            }
        }
    }
}

/// Sampler coordinates: `w = w0 + L z` and `log sigma = s0 + c t`, where `L`
/// is the Cholesky factor of the conditional posterior covariance at the
/// reference noise scale.
struct Whitened<'a> {
    spec: &'a ModelSpec,
    w0: DVector<f64>,
    chol: DMatrix<f64>,
    s0: f64,
    c: f64,
    fixed_sigma: Option<f64>,
}

impl<'a> Whitened<'a> {
    fn new(spec: &'a ModelSpec) -> Self {
        let sigma_ref = spec.reference_sigma();
        let (w0, cov) = spec.conditional_posterior(sigma_ref);
        let chol = cov
            .clone()
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt())));
        let fixed_sigma = match spec.prior.sigma {
            SigmaPrior::Fixed(s) => Some(s),
            _ => None,
        };
        Self {
            spec,
            w0,
            chol,
            s0: sigma_ref.ln(),
            c: 1.0 / (2.0 * spec.n as f64 + 1.0).sqrt(),
            fixed_sigma,
        }
    }

    fn to_params(&self, theta: &[f64]) -> (DVector<f64>, f64) {
        let m = self.w0.len();
        let z = DVector::from_column_slice(&theta[..m]);
        let w = &self.w0 + &self.chol * z;
        let sigma = match self.fixed_sigma {
            Some(s) => s,
            None => (self.s0 + self.c * theta[m]).exp(),
        };
        (w, sigma)
    }
}

impl LogDensity for Whitened<'_> {
    fn dim(&self) -> usize {
        self.w0.len() + usize::from(self.fixed_sigma.is_none())
    }

    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let spec = self.spec;
        let m = self.w0.len();
        let (w, sigma) = self.to_params(theta);
        let s2 = sigma * sigma;
        let rss = spec.rss(&w);
        let mut gw = (&spec.xty - &spec.xtx * &w) / s2;
        let mut value = -rss / (2.0 * s2);
        for j in 0..m {
            let d = w[j] - spec.prior.mu_w[j];
            let v = spec.prior.sigma_w[j] * spec.prior.sigma_w[j];
            value -= d * d / (2.0 * v);
            gw[j] -= d / v;
        }
        let gz = self.chol.tr_mul(&gw);
        grad[..m].copy_from_slice(gz.as_slice());
        if self.fixed_sigma.is_none() {
            let SigmaPrior::Gamma { alpha, beta } = spec.prior.sigma else {
                unreachable!("sampled sigma implies a Gamma prior")
            };
            // Density of s = log sigma, Jacobian included.
            let n = spec.n as f64;
            let s = sigma.ln();
            value += -n * s + alpha * s - beta * sigma;
            grad[m] = self.c * (-n + rss / s2 + alpha - beta * sigma);
        }
        value
    }
}

/// Posterior draws of `(w, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    n_features: usize,
    /// Row-major `N x (m + 1)`: weights followed by sigma.
    draws: Vec<f64>,
    pub stats: NutsStats,
}

impl PosteriorSamples {
    pub fn from_rows(n_features: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut draws = Vec::with_capacity(rows.len() * (n_features + 1));
        for (w, s) in rows {
            if w.len() != n_features || !(*s > 0.0) {
                return Err(Error::InvalidInput("malformed posterior draw".into()));
            }
            draws.extend_from_slice(w);
            draws.push(*s);
        }
        Ok(Self {
            n_features,
            draws,
            stats: NutsStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len() / (self.n_features + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        let k = self.n_features + 1;
        &self.draws[i * k..i * k + self.n_features]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        let k = self.n_features + 1;
        self.draws[i * k + self.n_features]
    }

    /// Values of coordinate `j` across draws; `j == n_features` is sigma.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().skip(j).step_by(self.n_features + 1).copied().collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W, names: Option<&[String]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = match names {
            Some(n) if n.len() == self.n_features => n.to_vec(),
            _ => (0..self.n_features).map(|j| format!("w{j}")).collect(),
        };
        header.push("sigma".into());
        w.write_record(&header)?;
        for row in self.draws.chunks(self.n_features + 1) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n_draws` posterior samples after `cfg.burn_in` adaptation steps.
pub fn nuts_sample(spec: &ModelSpec, n_draws: usize, cfg: &NutsConfig, seed: u64) -> Result<PosteriorSamples> {
    let target = Whitened::new(spec);
    let init = vec![0.0; target.dim()];
    let run = nuts::sample(&target, &init, n_draws, cfg, seed)?;
    let m = spec.n_features();
    let mut draws = Vec::with_capacity(n_draws * (m + 1));
    for theta in &run.draws {
        let (w, sigma) = target.to_params(theta);
        draws.extend(w.iter());
        draws.push(sigma);
    }
    Ok(PosteriorSamples {
        n_features: m,
        draws,
        stats: run.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 0.8 * x[(i, 0)] - 0.3 * x[(i, 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn identity_design_prior_mean_is_target() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (p, ridge) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        assert_eq!(ridge, 0.0);
        for (a, b) in p.mu_w.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Perfect fit: scales hit the floor.
        assert!(p.sigma_w.iter().all(|&s| s == SIGMA_W_FLOOR));
        assert_eq!(p.sigma, SigmaPrior::Gamma { alpha: 1.5, beta: 0.5 });
    }

    #[test]
    fn sigma_w_modes() {
        let (x, y) = data(40, 2);
        let (v, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let (s, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::StdDev).unwrap();
        for j in 0..2 {
            assert!((v.sigma_w[j] * v.sigma_w[j] - s.sigma_w[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_gram_gets_ridge() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (p, ridge) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        assert!(ridge >= GRAM_RIDGE);
        assert!(p.mu_w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = data(25, 3);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let w = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let sigma = 0.2 + rng.random::<f64>();
            let (_, g, gs) = spec.log_posterior(&w, sigma).unwrap();
            let h = 1e-6;
            for j in 0..2 {
                let mut a = w;
                let mut b = w;
                a[j] += h;
                b[j] -= h;
                let fd = (spec.log_posterior(&a, sigma).unwrap().0 - spec.log_posterior(&b, sigma).unwrap().0) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0));
            }
            let fd = (spec.log_posterior(&w, sigma + h).unwrap().0 - spec.log_posterior(&w, sigma - h).unwrap().0) / (2.0 * h);
            assert!((fd - gs).abs() <= 1e-5 * gs.abs().max(1.0));
        }
    }

    #[test]
    fn no_data_gives_log_prior() {
        let prior = Prior {
            mu_w: vec![0.5],
            sigma_w: vec![2.0],
            sigma: SigmaPrior::unit_mode(0.5),
        };
        let spec = ModelSpec::new(&DMatrix::zeros(0, 1), &DVector::zeros(0), prior).unwrap();
        let (v, _, _) = spec.log_posterior(&[1.0], 1.5).unwrap();
        let normal = statrs::distribution::Normal::new(0.5, 2.0).unwrap();
        let gamma = statrs::distribution::Gamma::new(1.5, 0.5).unwrap();
        use statrs::distribution::Continuous;
        assert!((v - normal.ln_pdf(1.0) - gamma.ln_pdf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_symmetry() {
        let (x, y) = data(20, 5);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let flipped = Prior {
            mu_w: prior.mu_w.iter().map(|v| -v).collect(),
            ..prior.clone()
        };
        let a = ModelSpec::new(&x, &y, prior).unwrap();
        let b = ModelSpec::new(&x, &-y.clone(), flipped).unwrap();
        let (va, _, _) = a.log_posterior(&[0.3, 0.1], 0.7).unwrap();
        let (vb, _, _) = b.log_posterior(&[-0.3, -0.1], 0.7).unwrap();
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let (x, y) = data(5, 1);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        assert!(spec.log_posterior(&[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn fixed_sigma_matches_conjugate_posterior() {
        let (x, y) = data(30, 7);
        let prior = Prior {
            mu_w: vec![0.0, 0.0],
            sigma_w: vec![1.0, 1.0],
            sigma: SigmaPrior::Fixed(0.5),
        };
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        let (mean, cov) = spec.conditional_posterior(0.5);
        let n_draws = 4000;
        let s = nuts_sample(&spec, n_draws, &NutsConfig::default(), 11).unwrap();
        for j in 0..2 {
            let col = s.column(j);
            let m = col.iter().sum::<f64>() / n_draws as f64;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n_draws - 1) as f64;
            let se = (cov[(j, j)] / n_draws as f64).sqrt();
            assert!((m - mean[j]).abs() < 3.0 * se, "mean {j}: {m} vs {}", mean[j]);
            let se_var = cov[(j, j)] * (2.0 / (n_draws - 1) as f64).sqrt();
            assert!((v - cov[(j, j)]).abs() < 3.0 * se_var, "var {j}: {v} vs {}", cov[(j, j)]);
        }
        assert!(s.column(2).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn sampled_sigma_positive_and_near_truth() {
        let (x, y) = data(200, 9);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        let s = nuts_sample(&spec, 1000, &NutsConfig::default(), 3).unwrap();
        let sig = s.column(2);
        assert!(sig.iter().all(|&v| v > 0.0 && v.is_finite()));
        let m = sig.iter().sum::<f64>() / sig.len() as f64;
        assert!((m - 0.5).abs() < 0.08, "sigma mean {m}");
        assert_eq!(s.stats.n_divergent, 0);
    }
}
