use serde::{Deserialize, Serialize};

use crate::bayes::PredictiveMixture;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 4096;
/// Half-width of the grid support in component standard deviations.
pub const SUPPORT_WIDTH: f64 = 8.0;

/// Predictive density sampled on an even grid.
///
/// Between grid points the density is taken to be linear; `cdf` is its exact
/// integral at the grid points and the density is normalised so that
/// `cdf[K-1] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    x0: f64,
    step: f64,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl DensityGrid {
    pub fn from_mixture(mix: &PredictiveMixture, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(Error::InvalidInput("density grid needs at least 3 points".into()));
        }
        let (lo, hi) = mix.support(SUPPORT_WIDTH);
        let step = (hi - lo) / (points - 1) as f64;
        let mut density = vec![0.0; points];
        for (&mu, &sd) in mix.means().iter().zip(mix.stds()) {
            add_gaussian(&mut density, lo, step, mu, sd);
        }
        Self::from_values(lo, step, density)
    }

    /// Grid from raw density values at `x0 + k * step`; values are renormalised.
    pub fn from_values(x0: f64, step: f64, mut density: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || density.len() < 2 || density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidInput("invalid density grid".into()));
        }
        let mut cdf = vec![0.0; density.len()];
        for k in 1..density.len() {
            cdf[k] = cdf[k - 1] + 0.5 * step * (density[k - 1] + density[k]);
        }
        let total = *cdf.last().expect("non-empty");
        if !(total > 0.0) {
            return Err(Error::InvalidInput("density has no mass on the grid".into()));
        }
        density.iter_mut().for_each(|d| *d /= total);
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { x0, step, density, cdf })
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.step
    }

    pub fn lower(&self) -> f64 {
        self.x0
    }

    pub fn upper(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    /// Piecewise-linear density at `x`; zero outside the support.
    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.x0 || x > self.upper() {
            return 0.0;
        }
        let u = (x - self.x0) / self.step;
        let k = (u.floor() as usize).min(self.len() - 2);
        let t = u - k as f64;
        self.density[k] + t * (self.density[k + 1] - self.density[k])
    }

    /// Exact integral of the piecewise-linear density up to `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.x0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let u = (x - self.x0) / self.step;
        let k = (u.floor() as usize).min(self.len() - 2);
        let t = u - k as f64;
        let (a, b) = (self.density[k], self.density[k + 1]);
        self.cdf[k] + self.step * t * (a + 0.5 * t * (b - a))
    }

    /// Probability mass of `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.cdf_at(b) - self.cdf_at(a)).max(0.0)
    }
}

/// Adds `N(mu, sd^2)` evaluated on the grid, walking outward from the mean
/// with a multiplicative recurrence instead of one `exp` per point.
fn add_gaussian(density: &mut [f64], x0: f64, step: f64, mu: f64, sd: f64) {
    let k_len = density.len();
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let k0 = ((mu - x0) / step).round().clamp(0.0, (k_len - 1) as f64) as usize;
    let d0 = x0 + k0 as f64 * step - mu;
    let inv = 1.0 / (sd * sd);
    let g0 = (-0.5 * d0 * d0 * inv).exp();
    let c = (-step * step * inv).exp();
    const CUTOFF: f64 = 1e-30;

    let mut g = g0;
    let mut r = (-(2.0 * d0 * step + step * step) * 0.5 * inv).exp();
    for d in density[k0..].iter_mut() {
        *d += norm * g;
        g *= r;
        r *= c;
        if g < CUTOFF && r < 1.0 {
            break;
        }
    }
    let mut g = g0 * (-(-2.0 * d0 * step + step * step) * 0.5 * inv).exp();
    let mut r = (-(-2.0 * d0 * step + 3.0 * step * step) * 0.5 * inv).exp();
    for d in density[..k0].iter_mut().rev() {
        *d += norm * g;
        g *= r;
        r *= c;
        if g < CUTOFF && r < 1.0 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{normal_cdf, normal_pdf};

    #[test]
    fn recurrence_matches_direct_evaluation() {
        let mix = PredictiveMixture::new(vec![0.3, 2.0], vec![1.0, 0.4]).unwrap();
        let g = DensityGrid::from_mixture(&mix, 1001).unwrap();
        for k in (0..1001).step_by(37) {
            let x = g.x(k);
            let direct = 0.5 * (normal_pdf(x - 0.3) + normal_pdf((x - 2.0) / 0.4) / 0.4);
            assert!((g.density()[k] - direct).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn cdf_normalised_and_close_to_exact() {
        let mix = PredictiveMixture::single(5.0, 2.0).unwrap();
        let g = DensityGrid::from_mixture(&mix, DEFAULT_GRID_POINTS).unwrap();
        assert_eq!(*g.cdf_values().last().unwrap(), 1.0);
        assert!(g.cdf_values().windows(2).all(|w| w[1] >= w[0]));
        for z in [-2.0, -0.5, 0.0, 1.3] {
            assert!((g.cdf_at(5.0 + 2.0 * z) - normal_cdf(z)).abs() < 1e-5);
        }
        assert!((g.lower() + 11.0).abs() < 1e-12 && (g.upper() - 21.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_at_is_exact_integral_of_linear_density() {
        let g = DensityGrid::from_values(0.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert!((g.cdf_at(0.5) - 0.125).abs() < 1e-15);
        assert!((g.cdf_at(1.0) - 0.5).abs() < 1e-15);
        assert!((g.cdf_at(1.5) - 0.875).abs() < 1e-15);
        assert!((g.density_at(0.25) - 0.25).abs() < 1e-15);
    }
}
