use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::model::PosteriorSamples;
use crate::error::{Error, Result};

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Equal-weight Gaussian mixture approximating the posterior predictive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMixture {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl PredictiveMixture {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != stds.len() {
            return Err(Error::InvalidInput("mixture needs matching, non-empty means and stds".into()));
        }
        if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("mixture components must be finite with positive std".into()));
        }
        Ok(Self { means, stds })
    }

    pub fn single(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![mean], vec![std])
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.len() as f64
    }

    /// Total variance: mean component variance plus variance of component means.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let n = self.len() as f64;
        self.stds.iter().map(|s| s * s).sum::<f64>() / n + self.means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let s: f64 = self
            .means
            .iter()
            .zip(&self.stds)
            .map(|(m, sd)| normal_pdf((x - m) / sd) / sd)
            .sum();
        s / self.len() as f64
    }

    /// Exact mixture CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        let s: f64 = self
            .means
            .iter()
            .zip(&self.stds)
            .map(|(m, sd)| normal_cdf((x - m) / sd))
            .sum();
        (s / self.len() as f64).clamp(0.0, 1.0)
    }

    /// `[min(mu - k sd), max(mu + k sd)]` over components.
    pub fn support(&self, k: f64) -> (f64, f64) {
        let lo = self.means.iter().zip(&self.stds).map(|(m, s)| m - k * s).fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().zip(&self.stds).map(|(m, s)| m + k * s).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Maps a mixture on a standardised target back to original units.
    pub fn destandardise(&self, loc: f64, scale: f64) -> Self {
        Self {
            means: self.means.iter().map(|m| loc + scale * m).collect(),
            stds: self.stds.iter().map(|s| scale * s).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mean", "std"])?;
        for (m, s) in self.means.iter().zip(&self.stds) {
            w.write_record([m.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One mixture component `N(w_i . x_new, sigma_i^2)` per posterior draw.
pub fn estimate_ppd(samples: &PosteriorSamples, x_new: &[f64]) -> Result<PredictiveMixture> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no posterior samples".into()));
    }
    if x_new.len() != samples.n_features() {
        return Err(Error::InvalidInput("x_new has wrong length".into()));
    }
    let n = samples.len();
    let means = (0..n)
        .map(|i| samples.weights(i).iter().zip(x_new).map(|(w, x)| w * x).sum())
        .collect();
    let stds = (0..n).map(|i| samples.sigma(i)).collect();
    PredictiveMixture::new(means, stds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_draw_is_gaussian() {
        let s = PosteriorSamples::from_rows(2, &[(vec![1.0, 2.0], 0.5)]).unwrap();
        let p = estimate_ppd(&s, &[3.0, -1.0]).unwrap();
        assert_eq!(p.means(), &[1.0]);
        assert_eq!(p.stds(), &[0.5]);
        assert!((p.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((p.pdf(1.0) - normal_pdf(0.0) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_mean_and_variance() {
        let rows = vec![(vec![1.0], 1.0), (vec![3.0], 2.0), (vec![-1.0], 0.5)];
        let s = PosteriorSamples::from_rows(1, &rows).unwrap();
        let p = estimate_ppd(&s, &[2.0]).unwrap();
        assert!((p.mean() - (2.0 + 6.0 - 2.0) / 3.0).abs() < 1e-12);
        let mean_var = (1.0 + 4.0 + 0.25) / 3.0;
        assert!(p.variance() >= mean_var);
    }

    #[test]
    fn destandardise_shifts_and_scales() {
        let p = PredictiveMixture::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let q = p.destandardise(10.0, 3.0);
        assert_eq!(q.means(), &[10.0, 13.0]);
        assert_eq!(q.stds(), &[3.0, 6.0]);
        assert!((q.cdf(10.0 + 3.0 * 0.3) - p.cdf(0.3)).abs() < 1e-14);
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(PredictiveMixture::new(vec![], vec![]).is_err());
        assert!(PredictiveMixture::new(vec![0.0], vec![0.0]).is_err());
        assert!(PredictiveMixture::new(vec![f64::NAN], vec![1.0]).is_err());
    }
}
