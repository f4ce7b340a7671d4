use serde::{Deserialize, Serialize};

use super::grid::DensityGrid;

/// Number of cut levels in the schedule; targets are `1/n, 2/n, ..., 1`.
pub const DEFAULT_CUT_LEVELS: usize = 100;
/// Credibility used when the cut schedule shows no fusion of sub-intervals.
pub const DEFAULT_FALLBACK_ALPHA: f64 = 0.9;
const BISECTION_STEPS: usize = 60;

/// Superlevel set `{x : density(x) >= p_cut}` and its mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hdi {
    pub p_cut: f64,
    pub alpha: f64,
    /// Disjoint intervals in ascending order.
    pub intervals: Vec<(f64, f64)>,
    /// Mass of each interval.
    pub masses: Vec<f64>,
}

impl Hdi {
    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= y && y <= b)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// Mass of the superlevel set at `p_cut`, without building the intervals.
pub fn alpha_at_cut(grid: &DensityGrid, p_cut: f64) -> f64 {
    let f = grid.density();
    let h = grid.step();
    let mut mass = 0.0;
    for k in 0..f.len() - 1 {
        mass += segment_mass(f[k], f[k + 1], h, p_cut);
    }
    mass
}

/// Mass over the part of one linear segment where the density is at least `p`.
fn segment_mass(a: f64, b: f64, h: f64, p: f64) -> f64 {
    match (a >= p, b >= p) {
        (true, true) => 0.5 * h * (a + b),
        (false, false) => 0.0,
        (true, false) => {
            let t = (a - p) / (a - b);
            0.5 * h * t * (a + p)
        }
        (false, true) => {
            let t = (b - p) / (b - a);
            0.5 * h * t * (b + p)
        }
    }
}

pub fn hdi_at_cut(grid: &DensityGrid, p_cut: f64) -> Hdi {
    let f = grid.density();
    let h = grid.step();
    let mut intervals = Vec::new();
    let mut masses = Vec::new();
    let mut open: Option<(f64, f64)> = (f[0] >= p_cut).then(|| (grid.x(0), 0.0));
    for k in 0..f.len() - 1 {
        let (a, b) = (f[k], f[k + 1]);
        let m = segment_mass(a, b, h, p_cut);
        match (a >= p_cut, b >= p_cut) {
            (true, true) => {
                if let Some((_, acc)) = open.as_mut() {
                    *acc += m;
                }
            }
            (true, false) => {
                let (start, acc) = open.take().expect("interval open while above the cut");
                let end = grid.x(k) + h * (a - p_cut) / (a - b);
                intervals.push((start, end));
                masses.push(acc + m);
            }
            (false, true) => {
                let start = grid.x(k + 1) - h * (b - p_cut) / (b - a);
                open = Some((start, m));
            }
            (false, false) => {}
        }
    }
    if let Some((start, acc)) = open {
        intervals.push((start, grid.upper()));
        masses.push(acc);
    }
    Hdi {
        p_cut,
        alpha: masses.iter().sum(),
        intervals,
        masses,
    }
}

/// Largest cut whose superlevel set still has mass at least `alpha`.
pub fn cut_for_alpha(grid: &DensityGrid, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, grid.max_density());
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if alpha_at_cut(grid, mid) >= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Cut levels in descending order targeting masses `1/levels, ..., 1`.
pub fn cut_schedule(grid: &DensityGrid, levels: usize) -> Vec<f64> {
    (1..=levels).map(|i| cut_for_alpha(grid, i as f64 / levels as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    /// Mass of `[lower, upper]`.
    pub alpha: f64,
    pub p_cut: f64,
    /// True when no fusion event existed and the fixed-credibility HDI was used.
    pub fallback: bool,
}

/// Prediction interval with the largest mass per width among the intervals
/// present just before sub-intervals fuse along the cut schedule.
///
/// `family` is the HDI at each level of the descending schedule. Without any
/// fusion the HDI at `fallback_alpha` is returned.
pub fn select_pi(grid: &DensityGrid, family: &[Hdi], fallback_alpha: f64) -> PredictionInterval {
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for pair in family.windows(2) {
        if pair[1].len() >= pair[0].len() {
            continue;
        }
        let before = &pair[0];
        for (&(lo, hi), &mass) in before.intervals.iter().zip(&before.masses) {
            let width = hi - lo;
            if !(width > 0.0) {
                continue;
            }
            let ratio = mass / width;
            let better = match best {
                None => true,
                Some((r, l, ..)) => {
                    let tol = 1e-9 * r.abs().max(ratio.abs());
                    ratio > r + tol || ((ratio - r).abs() <= tol && lo < l)
                }
            };
            if better {
                best = Some((ratio, lo, hi, mass, before.p_cut));
            }
        }
    }
    if let Some((_, lower, upper, alpha, p_cut)) = best {
        return PredictionInterval {
            lower,
            upper,
            alpha,
            p_cut,
            fallback: false,
        };
    }
    let p_cut = cut_for_alpha(grid, fallback_alpha);
    let hdi = hdi_at_cut(grid, p_cut);
    PredictionInterval {
        lower: hdi.intervals.first().map_or(grid.lower(), |i| i.0),
        upper: hdi.intervals.last().map_or(grid.upper(), |i| i.1),
        alpha: hdi.alpha,
        p_cut,
        fallback: true,
    }
}

/// Median of the density restricted to `[lower, upper]`.
pub fn point_estimate(grid: &DensityGrid, lower: f64, upper: f64) -> f64 {
    let base = grid.cdf_at(lower);
    let half = 0.5 * (grid.cdf_at(upper) - base);
    let (mut lo, mut hi) = (lower, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if grid.cdf_at(mid) - base < half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::PredictiveMixture;

    fn grid(means: &[f64], sds: &[f64]) -> DensityGrid {
        let mix = PredictiveMixture::new(means.to_vec(), sds.to_vec()).unwrap();
        DensityGrid::from_mixture(&mix, 4096).unwrap()
    }

    #[test]
    fn zero_cut_is_whole_support() {
        let g = grid(&[0.0], &[1.0]);
        let h = hdi_at_cut(&g, 0.0);
        assert_eq!(h.intervals, vec![(g.lower(), g.upper())]);
        assert!((h.alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_sigma_cut() {
        let g = grid(&[2.0], &[3.0]);
        let p = crate::bayes::normal_pdf(1.0) / 3.0;
        let h = hdi_at_cut(&g, p);
        assert_eq!(h.len(), 1);
        assert!((h.intervals[0].0 - -1.0).abs() < 1e-3);
        assert!((h.intervals[0].1 - 5.0).abs() < 1e-3);
        assert!((h.alpha - 0.682_689_492).abs() < 1e-4);
        assert!((alpha_at_cut(&g, p) - h.alpha).abs() < 1e-12);
    }

    #[test]
    fn bimodal_cut_above_valley_gives_two_intervals() {
        let g = grid(&[-3.0, 3.0], &[1.0, 1.0]);
        let valley = g.density_at(0.0);
        assert_eq!(hdi_at_cut(&g, valley * 2.0).len(), 2);
        assert_eq!(hdi_at_cut(&g, valley * 0.5).len(), 1);
    }

    #[test]
    fn schedule_monotone_and_ends_at_one() {
        let g = grid(&[-1.0, 0.5, 4.0], &[0.5, 1.0, 0.3]);
        let s = cut_schedule(&g, DEFAULT_CUT_LEVELS);
        assert_eq!(s.len(), 100);
        let alphas: Vec<f64> = s.iter().map(|&p| alpha_at_cut(&g, p)).collect();
        assert!(alphas.windows(2).all(|w| w[1] >= w[0]));
        assert!(*alphas.last().unwrap() >= 0.999);
        for (i, a) in alphas.iter().enumerate() {
            assert!((a - (i + 1) as f64 / 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn unimodal_schedule_single_interval_and_fallback() {
        let g = grid(&[10.0], &[2.0]);
        let family: Vec<Hdi> = cut_schedule(&g, 100).iter().map(|&p| hdi_at_cut(&g, p)).collect();
        assert!(family.iter().all(|h| h.len() == 1));
        let pi = select_pi(&g, &family, DEFAULT_FALLBACK_ALPHA);
        assert!(pi.fallback);
        assert!((pi.lower - (10.0 - 1.644_853_627 * 2.0)).abs() < 1e-3 * 2.0);
        assert!((pi.upper - (10.0 + 1.644_853_627 * 2.0)).abs() < 1e-3 * 2.0);
        let y = point_estimate(&g, pi.lower, pi.upper);
        assert!((y - 10.0).abs() < 1e-3 * 2.0);
    }

    #[test]
    fn symmetric_bimodal_tie_goes_left() {
        let g = grid(&[-4.0, 4.0], &[1.0, 1.0]);
        let family: Vec<Hdi> = cut_schedule(&g, 100).iter().map(|&p| hdi_at_cut(&g, p)).collect();
        let pi = select_pi(&g, &family, DEFAULT_FALLBACK_ALPHA);
        assert!(!pi.fallback);
        assert!(pi.upper < 0.0, "{pi:?}");
    }

    #[test]
    fn point_estimate_skewed_matches_cdf() {
        let g = grid(&[0.0, 1.5], &[1.0, 0.3]);
        let (a, b) = (-1.0, 2.0);
        let y = point_estimate(&g, a, b);
        let target = 0.5 * (g.cdf_at(b) - g.cdf_at(a));
        assert!((g.cdf_at(y) - g.cdf_at(a) - target).abs() < 1e-12);
        assert!(a < y && y < b);
    }
}
