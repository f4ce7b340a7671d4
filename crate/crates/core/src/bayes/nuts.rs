//! No-U-Turn sampler with slice sampling and dual-averaging step-size
//! adaptation (Hoffman & Gelman, 2014, algorithm 6).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalised log density with gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Returns `log p(theta)` and writes its gradient into `grad`.
    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NutsConfig {
    pub burn_in: usize,
    pub init_step: f64,
    pub target_accept: f64,
    pub max_depth: usize,
    /// Energy error beyond which a trajectory is treated as divergent.
    pub max_delta_h: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            burn_in: 500,
            init_step: 1e-3,
            target_accept: 0.8,
            max_depth: 10,
            max_delta_h: 1000.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NutsStats {
    /// Step size used after burn-in.
    pub step_size: f64,
    /// Divergent transitions among the kept draws.
    pub n_divergent: usize,
    pub mean_accept: f64,
    pub mean_tree_depth: f64,
    pub max_tree_depth_hits: usize,
    /// Largest |H - H0| seen at any leapfrog step of the kept draws.
    pub max_energy_error: f64,
    pub n_leapfrog: usize,
}

impl NutsStats {
    pub fn divergence_rate(&self, n_draws: usize) -> f64 {
        if n_draws == 0 {
            0.0
        } else {
            self.n_divergent as f64 / n_draws as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct NutsRun {
    /// One row per kept draw.
    pub draws: Vec<Vec<f64>>,
    pub stats: NutsStats,
}

#[derive(Clone)]
struct Point {
    theta: Vec<f64>,
    r: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Point {
    fn joint(&self) -> f64 {
        self.logp - 0.5 * self.r.iter().map(|v| v * v).sum::<f64>()
    }
}

struct Tree {
    minus: Point,
    plus: Point,
    proposal: Point,
    n: usize,
    ok: bool,
    alpha: f64,
    n_alpha: usize,
}

struct Trajectory<'a, M: LogDensity> {
    model: &'a M,
    log_u: f64,
    h0: f64,
    max_delta_h: f64,
    divergent: bool,
    max_energy_error: f64,
    n_leapfrog: usize,
    iteration: usize,
}

impl<M: LogDensity> Trajectory<'_, M> {
    fn leapfrog(&mut self, p: &Point, eps: f64) -> Result<Point> {
        self.n_leapfrog += 1;
        let d = p.theta.len();
        let mut r: Vec<f64> = (0..d).map(|i| p.r[i] + 0.5 * eps * p.grad[i]).collect();
        let theta: Vec<f64> = (0..d).map(|i| p.theta[i] + eps * r[i]).collect();
        let mut grad = vec![0.0; d];
        let logp = self.model.log_density(&theta, &mut grad);
        if logp.is_finite() && grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(self.iteration));
        }
        for i in 0..d {
            r[i] += 0.5 * eps * grad[i];
        }
        Ok(Point { theta, r, grad, logp })
    }

    fn build<R: Rng>(&mut self, rng: &mut R, p: &Point, v: f64, depth: usize, eps: f64) -> Result<Tree> {
        if depth == 0 {
            let q = self.leapfrog(p, v * eps)?;
            let joint = q.joint();
            let (n, ok, alpha) = if joint.is_finite() {
                self.max_energy_error = self.max_energy_error.max((joint - self.h0).abs());
                let ok = self.log_u < joint + self.max_delta_h;
                (usize::from(self.log_u <= joint), ok, (joint - self.h0).exp().min(1.0))
            } else {
                (0, false, 0.0)
            };
            if !ok {
                self.divergent = true;
            }
            return Ok(Tree {
                minus: q.clone(),
                plus: q.clone(),
                proposal: q,
                n,
                ok,
                alpha,
                n_alpha: 1,
            });
        }
        let mut tree = self.build(rng, p, v, depth - 1, eps)?;
        if !tree.ok {
            return Ok(tree);
        }
        let edge = if v < 0.0 { tree.minus.clone() } else { tree.plus.clone() };
        let other = self.build(rng, &edge, v, depth - 1, eps)?;
        if v < 0.0 {
            tree.minus = other.minus;
        } else {
            tree.plus = other.plus;
        }
        let total = tree.n + other.n;
        if other.n > 0 && rng.random::<f64>() < other.n as f64 / total as f64 {
            tree.proposal = other.proposal;
        }
        tree.alpha += other.alpha;
        tree.n_alpha += other.n_alpha;
        tree.ok = other.ok && no_u_turn(&tree.minus, &tree.plus);
        tree.n = total;
        Ok(tree)
    }
}

fn no_u_turn(minus: &Point, plus: &Point) -> bool {
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..minus.theta.len() {
        let d = plus.theta[i] - minus.theta[i];
        a += d * minus.r[i];
        b += d * plus.r[i];
    }
    a >= 0.0 && b >= 0.0
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    fn new(init_step: f64) -> Self {
        Self {
            mu: (10.0 * init_step).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            m: 0.0,
        }
    }

    fn update(&mut self, cfg: &NutsConfig, accept: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + cfg.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (cfg.target_accept - accept);
        let log_eps = self.mu - self.m.sqrt() / cfg.gamma * self.h_bar;
        let eta = self.m.powf(-cfg.kappa);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }
}

/// Runs `cfg.burn_in` adaptation iterations followed by `n_draws` kept draws.
pub fn sample<M: LogDensity>(
    model: &M,
    init: &[f64],
    n_draws: usize,
    cfg: &NutsConfig,
    seed: u64,
) -> Result<NutsRun> {
    if n_draws == 0 {
        return Err(Error::InvalidInput("at least one draw required".into()));
    }
    let d = model.dim();
    if init.len() != d {
        return Err(Error::InvalidInput(format!("initial point has {} coordinates, expected {d}", init.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; d];
    let logp = model.log_density(init, &mut grad);
    if !logp.is_finite() {
        return Err(Error::InvalidInput("log density not finite at the initial point".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(0));
    }
    let mut current = Point {
        theta: init.to_vec(),
        r: vec![0.0; d],
        grad,
        logp,
    };
    let mut eps = cfg.init_step;
    let mut da = DualAveraging::new(cfg.init_step);
    let mut draws = Vec::with_capacity(n_draws);
    let mut stats = NutsStats::default();
    let mut depth_sum = 0usize;
    let mut accept_sum = 0.0;

    for iter in 0..cfg.burn_in + n_draws {
        for r in current.r.iter_mut() {
            *r = rng.sample(StandardNormal);
        }
        let h0 = current.joint();
        let e: f64 = rng.sample(Exp1);
        let mut traj = Trajectory {
            model,
            log_u: h0 - e,
            h0,
            max_delta_h: cfg.max_delta_h,
            divergent: false,
            max_energy_error: 0.0,
            n_leapfrog: 0,
            iteration: iter,
        };
        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut next = current.clone();
        let mut n = 1usize;
        let mut depth = 0;
        let (mut alpha, mut n_alpha);
        loop {
            let v = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let tree = if v < 0.0 {
                let t = traj.build(&mut rng, &minus, v, depth, eps)?;
                minus = t.minus.clone();
                t
            } else {
                let t = traj.build(&mut rng, &plus, v, depth, eps)?;
                plus = t.plus.clone();
                t
            };
            alpha = tree.alpha;
            n_alpha = tree.n_alpha;
            if tree.ok && rng.random::<f64>() < tree.n as f64 / n as f64 {
                next = tree.proposal;
            }
            n += tree.n;
            depth += 1;
            if !(tree.ok && no_u_turn(&minus, &plus)) {
                break;
            }
            if depth >= cfg.max_depth {
                if iter >= cfg.burn_in {
                    stats.max_tree_depth_hits += 1;
                }
                break;
            }
        }
        current = next;
        let accept = alpha / n_alpha as f64;
        if iter < cfg.burn_in {
            eps = da.update(cfg, accept);
            if iter + 1 == cfg.burn_in {
                eps = da.log_eps_bar.exp();
            }
        } else {
            draws.push(current.theta.clone());
            stats.n_divergent += usize::from(traj.divergent);
            stats.max_energy_error = stats.max_energy_error.max(traj.max_energy_error);
            stats.n_leapfrog += traj.n_leapfrog;
            depth_sum += depth;
            accept_sum += accept;
        }
    }
    stats.step_size = eps;
    stats.mean_accept = accept_sum / n_draws as f64;
    stats.mean_tree_depth = depth_sum as f64 / n_draws as f64;
    let rate = stats.divergence_rate(n_draws);
    if rate > 0.2 {
        log::warn!(
            "NUTS: {:.1}% divergent transitions (step size {:.3e}, mean acceptance {:.3})",
            100.0 * rate,
            stats.step_size,
            stats.mean_accept
        );
    }
    Ok(NutsRun { draws, stats })
}

/// Split potential scale reduction factor of one scalar quantity across chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .filter(|h| !h.is_empty())
        .collect();
    let m = halves.len() as f64;
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    if m < 2.0 || n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / m;
    let var = (n - 1.0) / n * w + b / n;
    (var / w).sqrt()
}
