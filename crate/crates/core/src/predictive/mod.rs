//! Prediction intervals, point estimates and sign probabilities from the
//! posterior predictive mixture.

mod grid;
mod hdi;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bayes::PredictiveMixture;
use crate::error::{Error, Result};

pub use grid::{DensityGrid, DEFAULT_GRID_POINTS, SUPPORT_WIDTH};
pub use hdi::{
    alpha_at_cut, cut_for_alpha, cut_schedule, hdi_at_cut, point_estimate, select_pi, Hdi, PredictionInterval,
    DEFAULT_CUT_LEVELS, DEFAULT_FALLBACK_ALPHA,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveConfig {
    pub grid_points: usize,
    pub cut_levels: usize,
    pub fallback_alpha: f64,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            cut_levels: DEFAULT_CUT_LEVELS,
            fallback_alpha: DEFAULT_FALLBACK_ALPHA,
        }
    }
}

/// Interval family, selected interval and point estimate of one forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub point: f64,
    pub interval: PredictionInterval,
    /// HDI at each cut level, from the highest cut (smallest mass) down.
    pub hdi_family: Vec<Hdi>,
}

impl PredictiveSummary {
    /// HDI whose target mass is closest to `alpha`.
    pub fn hdi_for(&self, alpha: f64) -> Option<&Hdi> {
        let n = self.hdi_family.len();
        if n == 0 {
            return None;
        }
        let i = ((alpha * n as f64).round() as usize).clamp(1, n) - 1;
        self.hdi_family.get(i)
    }

    /// Writes `p_cut, alpha, n_intervals` for each cut level.
    pub fn write_alpha_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p_cut", "alpha", "n_intervals"])?;
        for h in &self.hdi_family {
            w.write_record([h.p_cut.to_string(), h.alpha.to_string(), h.len().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn summarise(mix: &PredictiveMixture, cfg: &PredictiveConfig) -> Result<PredictiveSummary> {
    let grid = DensityGrid::from_mixture(mix, cfg.grid_points)?;
    let hdi_family: Vec<Hdi> = cut_schedule(&grid, cfg.cut_levels)
        .into_iter()
        .map(|p| hdi_at_cut(&grid, p))
        .collect();
    let interval = select_pi(&grid, &hdi_family, cfg.fallback_alpha);
    let point = point_estimate(&grid, interval.lower, interval.upper);
    Ok(PredictiveSummary {
        point,
        interval,
        hdi_family,
    })
}

/// `(P(Y < threshold), P(Y >= threshold))` from the exact mixture CDF.
pub fn threshold_probs(mix: &PredictiveMixture, threshold: f64) -> Result<(f64, f64)> {
    if !threshold.is_finite() {
        return Err(Error::InvalidInput("threshold must be finite".into()));
    }
    let p_minus = mix.cdf(threshold);
    Ok((p_minus, 1.0 - p_minus))
}

/// Probabilities that the end-of-day index ends below / above the auction price.
pub fn spread_probs(mix: &PredictiveMixture, p_da: f64) -> Result<(f64, f64)> {
    threshold_probs(mix, p_da)
}

/// Probabilities that the end-of-day index ends below / above its live value.
pub fn rest_probs(mix: &PredictiveMixture, live_idfull: Option<f64>) -> Result<(f64, f64)> {
    threshold_probs(mix, live_idfull.ok_or_else(|| Error::Undefined("live idfull".into()))?)
}

/// Sign with `sign(0) = +1`.
pub fn sign(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

/// Spread sign: the predictive call when it is credible beyond `p0`, else the
/// sign of the live spread.
pub fn sign_spread(p_plus: f64, p0: f64, live_idfull: Option<f64>, p_da: f64) -> Result<i8> {
    if !(0.5..=1.0).contains(&p0) {
        return Err(Error::InvalidInput(format!("p0 = {p0} outside [0.5, 1]")));
    }
    if p_plus > p0 {
        return Ok(1);
    }
    if 1.0 - p_plus > p0 {
        return Ok(-1);
    }
    let live = live_idfull.ok_or_else(|| Error::Undefined("live idfull".into()))?;
    Ok(sign(live - p_da))
}

pub fn sign_rest(p_plus: f64) -> i8 {
    if p_plus >= 0.5 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_sum_to_one() {
        let mix = PredictiveMixture::new(vec![-1.0, 2.0], vec![1.0, 0.5]).unwrap();
        for t in [-10.0, 0.0, 1.7, 40.0] {
            let (a, b) = spread_probs(&mix, t).unwrap();
            assert!((a + b - 1.0).abs() < 1e-15);
        }
        assert_eq!(spread_probs(&mix, -1e3).unwrap().1, 1.0);
        let single = PredictiveMixture::single(3.0, 2.0).unwrap();
        let (a, b) = spread_probs(&single, 3.0).unwrap();
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_cdf_agrees_with_grid() {
        let mix = PredictiveMixture::new(vec![-1.0, 2.0], vec![1.0, 0.5]).unwrap();
        let g = DensityGrid::from_mixture(&mix, 4096).unwrap();
        for t in [-2.0, 0.3, 2.1] {
            assert!((threshold_probs(&mix, t).unwrap().0 - g.cdf_at(t)).abs() < 1e-5);
        }
    }

    #[test]
    fn rest_requires_live_value() {
        let mix = PredictiveMixture::single(0.0, 1.0).unwrap();
        assert!(rest_probs(&mix, None).is_err());
        assert!(rest_probs(&mix, Some(0.0)).is_ok());
    }

    #[test]
    fn sign_estimators() {
        assert_eq!(sign_spread(0.9, 0.8, None, 100.0).unwrap(), 1);
        assert_eq!(sign_spread(0.1, 0.8, None, 100.0).unwrap(), -1);
        assert_eq!(sign_spread(0.6, 0.8, Some(95.0), 100.0).unwrap(), -1);
        assert_eq!(sign_spread(0.6, 0.8, Some(100.0), 100.0).unwrap(), 1);
        assert!(sign_spread(0.6, 0.8, None, 100.0).is_err());
        // p0 = 1 always falls back to the live spread.
        assert_eq!(sign_spread(1.0, 1.0, Some(90.0), 100.0).unwrap(), -1);
        assert_eq!(sign_rest(0.5), 1);
        assert_eq!(sign_rest(0.49), -1);
    }

    #[test]
    fn summary_of_single_gaussian() {
        let mix = PredictiveMixture::single(50.0, 4.0).unwrap();
        let s = summarise(&mix, &PredictiveConfig::default()).unwrap();
        assert!(s.interval.fallback);
        assert!((s.point - 50.0).abs() < 4e-3);
        assert!((s.interval.alpha - 0.9).abs() < 1e-6);
        let h = s.hdi_for(0.5).unwrap();
        assert!((h.alpha - 0.5).abs() < 1e-6);
        assert!(s.interval.lower < s.point && s.point < s.interval.upper);
    }
}
