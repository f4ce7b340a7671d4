use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use super::forecast::ForecastResult;
use super::run::load_results;
use super::score::ScoreRecord;
use crate::error::{Error, Result};
use crate::evaluation::dm_test;

/// Scores compared by the DM test; all are losses (lower is better).
pub const DM_SCORES: [&str; 4] = ["mae", "spread_sign", "rest_sign", "crps"];

/// One cell of the DM matrix: evidence that `row` is more accurate than `col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmCell {
    pub score: String,
    pub row: String,
    pub col: String,
    /// Mean loss of `col` minus mean loss of `row`.
    pub mean_improvement: Option<f64>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Loss series of one forecaster for one score; `None` where undefined.
fn losses(records: &[ScoreRecord], score: &str, live: bool) -> Vec<Option<f64>> {
    let b = |v: Option<bool>| v.map(|c| if c { 0.0 } else { 1.0 });
    records
        .iter()
        .map(|r| match (score, live) {
            ("mae", false) => Some(r.abs_error),
            ("crps", false) => Some(r.crps),
            ("spread_sign", false) => b(r.spread_correct.first().copied().flatten()),
            ("rest_sign", false) => b(r.rest_correct),
            // The live index is a point forecast: its CRPS is its absolute error.
            ("mae", true) | ("crps", true) => r.bench_abs_error,
            ("spread_sign", true) => b(r.bench_spread_correct),
            _ => None,
        })
        .collect()
}

fn records(results: &[ForecastResult], cfg: &StudyConfig) -> Result<Vec<ScoreRecord>> {
    results
        .iter()
        .map(|r| {
            // The spread-sign loss uses the first configured p0 level.
            ScoreRecord::from_result(r, &cfg.evaluation.p0_levels)
                .ok_or_else(|| Error::InvalidInput(format!("forecast {} h{:02} has no realised value", r.date, r.hour)))
        })
        .collect()
}

fn check_keys(a: &[ForecastResult], b: &[ForecastResult]) -> Result<()> {
    let ka: BTreeSet<(NaiveDate, u8)> = a.iter().map(|r| r.key()).collect();
    let kb: BTreeSet<(NaiveDate, u8)> = b.iter().map(|r| r.key()).collect();
    if ka == kb {
        return Ok(());
    }
    let fmt = |s: Vec<&(NaiveDate, u8)>| {
        let shown: Vec<String> = s.iter().take(10).map(|(d, h)| format!("{d} h{h:02}")).collect();
        let more = if s.len() > 10 { format!(" and {} more", s.len() - 10) } else { String::new() };
        format!("{}{more}", shown.join(", "))
    };
    Err(Error::KeyMismatch(format!(
        "only in first: [{}]; only in second: [{}]",
        fmt(ka.difference(&kb).collect()),
        fmt(kb.difference(&ka).collect())
    )))
}

/// Pairwise one-sided DM tests between two forecasters and the live benchmark.
pub fn compare_results(
    a: (&str, &[ForecastResult]),
    b: (&str, &[ForecastResult]),
    cfg: &StudyConfig,
) -> Result<Vec<DmCell>> {
    check_keys(a.1, b.1)?;
    let (ra, rb) = (records(a.1, cfg)?, records(b.1, cfg)?);
    let series = [(a.0, &ra, false), (b.0, &rb, false), ("live", &ra, true)];
    let mut cells = Vec::new();
    for score in DM_SCORES {
        let loss: Vec<Vec<Option<f64>>> = series.iter().map(|(_, r, live)| losses(r, score, *live)).collect();
        for (i, (row, ..)) in series.iter().enumerate() {
            for (j, (col, ..)) in series.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (lr, lc): (Vec<f64>, Vec<f64>) = loss[i]
                    .iter()
                    .zip(&loss[j])
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .unzip();
                let n = lr.len();
                let mean_improvement =
                    (n > 0).then(|| lc.iter().sum::<f64>() / n as f64 - lr.iter().sum::<f64>() / n as f64);
                // Positive statistic when the column's losses are larger, i.e. the row is better.
                let test = dm_test(&lc, &lr, cfg.evaluation.dm_horizon, true);
                if let Err(e) = &test {
                    log::debug!("DM {score} {row} vs {col}: {e}");
                }
                let test = test.ok();
                cells.push(DmCell {
                    score: score.to_string(),
                    row: row.to_string(),
                    col: col.to_string(),
                    mean_improvement,
                    statistic: test.map(|t| t.statistic),
                    p_value: test.map(|t| t.p_value),
                    n,
                });
            }
        }
    }
    Ok(cells)
}

fn study_label(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("scenario.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_else(|| dir.display().to_string())
}

/// DM matrix between two study directories.
pub fn compare(dir_a: &Path, dir_b: &Path, cfg: &StudyConfig) -> Result<Vec<DmCell>> {
    let (a, b) = (load_results(dir_a, None)?, load_results(dir_b, None)?);
    let la = study_label(dir_a);
    let mut lb = study_label(dir_b);
    if lb == la {
        lb.push_str("#2");
    }
    compare_results((&la, &a), (&lb, &b), cfg)
}

/// Writes the DM cells; undefined tests are written as `NA`.
pub fn write_dm_csv<W: Write>(writer: W, cells: &[DmCell]) -> Result<()> {
    let na = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["score", "row", "col", "mean_improvement", "statistic", "p_value", "n"])?;
    for c in cells {
        w.write_record([
            c.score.clone(),
            c.row.clone(),
            c.col.clone(),
            na(c.mean_improvement),
            na(c.statistic),
            na(c.p_value),
            c.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
