use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// Harvey-corrected statistic; positive when `loss_a` is larger on average.
    pub statistic: f64,
    /// One-sided: evidence that `b` is more accurate than `a`. Two-sided otherwise.
    pub p_value: f64,
    pub n: usize,
    pub horizon: usize,
}

/// Diebold-Mariano test on the loss differential `loss_a - loss_b`, with the
/// small-sample correction of Harvey, Leybourne and Newbold and a
/// `t(n-1)` reference distribution.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], horizon: usize, one_sided: bool) -> Result<DmResult> {
    let n = loss_a.len();
    if n != loss_b.len() {
        return Err(Error::InvalidInput("loss series differ in length".into()));
    }
    if n < 3 {
        return Err(Error::InvalidInput("DM test needs at least 3 observations".into()));
    }
    if horizon == 0 || horizon >= n {
        return Err(Error::InvalidInput(format!("invalid horizon {horizon}")));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let autocov = |k: usize| (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / nf;
    let var = autocov(0) + 2.0 * (1..horizon).map(autocov).sum::<f64>();
    if !(var > 0.0) {
        return Err(Error::DegenerateSeries("loss differential has zero variance".into()));
    }
    let h = horizon as f64;
    let harvey = ((nf + 1.0 - 2.0 * h + h * (h - 1.0) / nf) / nf).sqrt();
    let statistic = mean / (var / nf).sqrt() * harvey;
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).expect("n >= 3");
    let p_value = if one_sided {
        1.0 - t.cdf(statistic)
    } else {
        2.0 * (1.0 - t.cdf(statistic.abs()))
    };
    Ok(DmResult {
        statistic,
        p_value: p_value.clamp(0.0, 1.0),
        n,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shifted_losses_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 0.3 + 0.1 * rng.random::<f64>()).collect();
        let r = dm_test(&a, &b, 1, true).unwrap();
        assert!(r.statistic > 0.0 && r.p_value < 1e-6);
        let s = dm_test(&b, &a, 1, true).unwrap();
        assert_eq!(s.statistic, -r.statistic);
        assert!((s.p_value - (1.0 - r.p_value)).abs() < 1e-12);
    }

    #[test]
    fn identical_series_are_degenerate() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(dm_test(&a, &a, 1, true), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn harvey_factor_for_horizon_one() {
        // d = (1, 2, 3, 4): mean 2.5, gamma0 = 1.25, stat = 2.5 / sqrt(1.25 / 4) * sqrt(3 / 4).
        let r = dm_test(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], 1, false).unwrap();
        let expected = 2.5 / (1.25f64 / 4.0).sqrt() * (0.75f64).sqrt();
        assert!((r.statistic - expected).abs() < 1e-12);
    }
}
