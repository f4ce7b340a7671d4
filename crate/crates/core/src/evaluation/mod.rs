//! Point, interval and probabilistic forecast scores and Diebold-Mariano tests.

mod dm;

use serde::{Deserialize, Serialize};

use crate::bayes::{normal_cdf, normal_pdf, PredictiveMixture};
use crate::error::{Error, Result};
use crate::predictive::{DensityGrid, PredictiveSummary};

pub use dm::{dm_test, DmResult};

pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("MAE of an empty series".into()));
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Credibility levels used for coverage curves: 0.05, 0.10, ..., 0.95.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Whether `y` lies in the HDI of each level of `alpha_grid`.
pub fn coverage_hits(summary: &PredictiveSummary, y: f64, alpha_grid: &[f64]) -> Vec<bool> {
    alpha_grid
        .iter()
        .map(|&a| summary.hdi_for(a).is_some_and(|h| h.contains(y)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub alphas: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ace {
    /// Mean of `|coverage - alpha|`.
    pub absolute: f64,
    /// Mean of `coverage - alpha`; negative means intervals are too narrow.
    pub signed: f64,
}

/// Fraction of forecasts covered at each level; `hits[i][k]` refers to `alpha_grid[k]`.
pub fn empirical_coverage(hits: &[Vec<bool>], alpha_grid: &[f64]) -> Result<CoverageCurve> {
    if hits.is_empty() {
        return Err(Error::InvalidInput("coverage of no forecasts".into()));
    }
    if hits.iter().any(|h| h.len() != alpha_grid.len()) {
        return Err(Error::InvalidInput("coverage hits do not match the alpha grid".into()));
    }
    let n = hits.len() as f64;
    let coverage = (0..alpha_grid.len())
        .map(|k| hits.iter().filter(|h| h[k]).count() as f64 / n)
        .collect();
    Ok(CoverageCurve {
        alphas: alpha_grid.to_vec(),
        coverage,
    })
}

pub fn ace(curve: &CoverageCurve) -> Ace {
    let k = curve.alphas.len().max(1) as f64;
    let diffs = curve.coverage.iter().zip(&curve.alphas).map(|(c, a)| c - a);
    Ace {
        absolute: diffs.clone().map(f64::abs).sum::<f64>() / k,
        signed: diffs.sum::<f64>() / k,
    }
}

/// `E|X|` for `X ~ N(m, s^2)`.
fn abs_moment(m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return m.abs();
    }
    let z = m / s;
    m * (2.0 * normal_cdf(z) - 1.0) + 2.0 * s * normal_pdf(z)
}

/// Closed-form CRPS of an equal-weight Gaussian mixture:
/// `E|Y - y| - E|Y1 - Y2| / 2`.
pub fn crps(mix: &PredictiveMixture, y: f64) -> f64 {
    let (mu, sd) = (mix.means(), mix.stds());
    let n = mu.len();
    let nf = n as f64;
    let first = mu.iter().zip(sd).map(|(&m, &s)| abs_moment(m - y, s)).sum::<f64>() / nf;
    let mut pairs = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            row += abs_moment(mu[i] - mu[j], (sd[i] * sd[i] + sd[j] * sd[j]).sqrt());
        }
        pairs += row;
    }
    // Diagonal terms: E|Y1 - Y2| = 2 s / sqrt(pi) for two draws of one component.
    let diag = sd.iter().map(|s| 2.0 * s / std::f64::consts::PI.sqrt()).sum::<f64>();
    let second = (2.0 * pairs + diag) / (nf * nf);
    (first - 0.5 * second).max(0.0)
}

/// CRPS `∫ (F(x) - 1{x >= y})^2 dx` with `F` the CDF of the grid density.
///
/// `F` is quadratic on each grid segment, so three-point Gauss-Legendre per
/// segment integrates it exactly. Cost is linear in the grid size, which makes
/// it the practical choice for large mixtures.
pub fn crps_grid(grid: &DensityGrid, y: f64) -> f64 {
    const NODES: [(f64, f64); 3] = [
        (0.112_701_665_379_258_3, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ];
    let (lo, hi) = (grid.lower(), grid.upper());
    let mut total = (lo - y).max(0.0) + (y - hi).max(0.0);
    let piece = |a: f64, b: f64, step: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        NODES
            .iter()
            .map(|&(t, w)| {
                let x = a + t * (b - a);
                w * (grid.cdf_at(x) - step).powi(2)
            })
            .sum::<f64>()
            * (b - a)
    };
    for k in 0..grid.len() - 1 {
        let (a, b) = (grid.x(k), grid.x(k + 1));
        if b <= y {
            total += piece(a, b, 0.0);
        } else if a >= y {
            total += piece(a, b, 1.0);
        } else {
            total += piece(a, y, 0.0) + piece(y, b, 1.0);
        }
    }
    total
}

/// Fraction of correct sign calls; a zero realised value counts as correct.
pub fn sign_accuracy(predicted: &[i8], realised: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != realised.len() {
        return Err(Error::InvalidInput("sign accuracy needs matching, non-empty series".into()));
    }
    let correct = predicted
        .iter()
        .zip(realised)
        .filter(|(&p, &r)| r == 0.0 || (p > 0) == (r > 0.0))
        .count();
    Ok(correct as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictive::{summarise, PredictiveConfig};

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, -3.0]).unwrap(), 2.0);
        assert_eq!(mae(&[0.0; 4]).unwrap(), 0.0);
        assert!(mae(&[]).is_err());
    }

    #[test]
    fn never_covered_ace_is_mean_alpha() {
        let grid = default_alpha_grid();
        let hits = vec![vec![false; grid.len()]; 5];
        let a = ace(&empirical_coverage(&hits, &grid).unwrap());
        assert!((a.absolute - 0.5).abs() < 1e-12);
        assert!((a.signed + 0.5).abs() < 1e-12);
        let full = empirical_coverage(&[vec![true]], &[1.0]).unwrap();
        assert_eq!(ace(&full).absolute, 0.0);
    }

    #[test]
    fn hits_from_summary() {
        let mix = PredictiveMixture::single(0.0, 1.0).unwrap();
        let s = summarise(&mix, &PredictiveConfig::default()).unwrap();
        let h = coverage_hits(&s, 1.0, &[0.5, 0.8]);
        // |z| = 1 lies outside the 50% interval (0.674) and inside the 80% one (1.28).
        assert_eq!(h, vec![false, true]);
    }

    #[test]
    fn crps_single_gaussian_closed_form() {
        let (m, s, y) = (1.0, 2.0, 2.5);
        let z = (y - m) / s;
        let expected = s * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::f64::consts::PI.sqrt());
        let got = crps(&PredictiveMixture::single(m, s).unwrap(), y);
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn crps_sharp_limit_is_absolute_error() {
        let got = crps(&PredictiveMixture::single(3.0, 1e-9).unwrap(), 5.0);
        assert!((got - 2.0).abs() < 1e-8);
    }

    #[test]
    fn grid_crps_matches_closed_form() {
        let mix = PredictiveMixture::new(vec![-1.0, 0.5, 2.0], vec![0.7, 1.2, 0.4]).unwrap();
        let grid = DensityGrid::from_mixture(&mix, 4096).unwrap();
        for y in [-3.0, 0.0, 1.7, 15.0] {
            let (a, b) = (crps(&mix, y), crps_grid(&grid, y));
            assert!((a - b).abs() < 1e-4 * a, "y={y}: {a} vs {b}");
        }
    }

    #[test]
    fn sign_accuracy_examples() {
        assert_eq!(sign_accuracy(&[1, -1, 1, 1], &[2.0, -1.0, 3.0, -0.5]).unwrap(), 0.75);
        assert_eq!(sign_accuracy(&[1, -1], &[0.0, 0.0]).unwrap(), 1.0);
    }
}
