use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use super::scenario::ScenarioSpec;
use crate::error::Result;
use crate::features::{build_design, FeatureContext};
use crate::merit_order::CurveBook;
use crate::synthetic::derive_seed;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: Vec<(NaiveDate, u8)>,
    /// Forecasts whose design changed when the feed was cut at the creation time.
    pub mismatches: Vec<(NaiveDate, u8)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Seeded sample of about `fraction` of the keys, never empty when `fraction > 0`.
pub fn audit_sample(keys: &[(NaiveDate, u8)], fraction: f64, seed: u64) -> Vec<(NaiveDate, u8)> {
    if fraction <= 0.0 || keys.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xa0d1]));
    let mut out: Vec<_> = keys.iter().copied().filter(|_| rng.random::<f64>() < fraction).collect();
    if out.is_empty() {
        out.push(keys[rng.random_range(0..keys.len())]);
    }
    out
}

/// Rebuilds sampled designs from a transaction feed truncated at each
/// forecast's creation time and checks that rows and targets are unchanged.
pub fn leakage_audit(
    ctx: &FeatureContext,
    curves: &CurveBook,
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for (day, hour) in audit_sample(&spec.keys(), cfg.audit_fraction, cfg.seed) {
        let tau = spec.creation_time(day, hour);
        let full = build_design(ctx, day, hour, tau, cfg.history_days, cfg.min_history)?;
        let cut = FeatureContext::new(
            ctx.books.truncated(tau.to_utc()),
            curves,
            ctx.covariates.clone(),
            ctx.config.clone(),
        );
        let cut = build_design(&cut, day, hour, tau, cfg.history_days, cfg.min_history)?;
        let same = |a: &[Option<f64>], b: &[Option<f64>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.map(f64::to_bits) == y.map(f64::to_bits))
        };
        let identical = full.rows.len() == cut.rows.len()
            && full.rows.iter().zip(&cut.rows).all(|(a, b)| same(a, b))
            && same(&full.targets, &cut.targets);
        if !identical {
            log::error!("leakage audit: design of {day} h{hour:02} depends on trades after its creation time");
            report.mismatches.push((day, hour));
        }
        report.checked.push((day, hour));
    }
    Ok(report)
}
