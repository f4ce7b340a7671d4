use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::StudyConfig;
use super::forecast::ForecastResult;
use super::run::load_results;
use crate::error::{Error, Result};
use crate::evaluation::{ace, empirical_coverage, Ace, CoverageCurve};
use crate::predictive::{sign, sign_rest, sign_spread};

/// A sign call is right when it matches the realised sign; a zero outcome counts as right.
fn sign_correct(predicted: i8, realised: f64) -> bool {
    realised == 0.0 || predicted == sign(realised)
}

/// Per-forecast losses against the realised end-of-day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub lag_hours: f64,
    pub y_true: f64,
    pub abs_error: f64,
    /// Absolute error of the live index used as forecast.
    pub bench_abs_error: Option<f64>,
    pub crps: f64,
    /// Spread-sign correctness at each configured `p0`.
    pub spread_correct: Vec<Option<bool>>,
    pub bench_spread_correct: Option<bool>,
    pub rest_correct: Option<bool>,
    pub coverage: Vec<bool>,
    pub fallback: bool,
}

impl ScoreRecord {
    /// `None` when the forecast has no realised value.
    pub fn from_result(r: &ForecastResult, p0_levels: &[f64]) -> Option<Self> {
        let y = r.y_true?;
        let crps = r.crps?;
        let spread_correct = p0_levels
            .iter()
            .map(|&p0| {
                let (p_plus, p_da) = (r.prob_spread_up?, r.p_da?);
                let s = sign_spread(p_plus, p0, r.live_idfull, p_da).ok()?;
                Some(sign_correct(s, y - p_da))
            })
            .collect();
        Some(Self {
            date: r.date,
            hour: r.hour,
            lag_hours: r.lag_hours,
            y_true: y,
            abs_error: (r.point - y).abs(),
            bench_abs_error: r.live_idfull.map(|l| (l - y).abs()),
            crps,
            spread_correct,
            bench_spread_correct: match (r.live_idfull, r.p_da) {
                (Some(l), Some(p)) => Some(sign_correct(sign(l - p), y - p)),
                _ => None,
            },
            rest_correct: match (r.prob_rest_up, r.live_idfull) {
                (Some(p), Some(l)) => Some(sign_correct(sign_rest(p), y - l)),
                _ => None,
            },
            coverage: r.coverage.clone(),
            fallback: r.pi_fallback,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n: usize,
    pub mae: f64,
    /// MAE of the live index over the forecasts where it exists.
    pub bench_mae: Option<f64>,
    pub n_bench: usize,
    pub crps: f64,
    pub ace: Ace,
    pub coverage: CoverageCurve,
    pub spread_accuracy: Vec<(f64, Option<f64>)>,
    pub bench_spread_accuracy: Option<f64>,
    pub rest_accuracy: Option<f64>,
    /// Share of prediction intervals from the fixed-credibility fallback.
    pub fallback_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub records: Vec<ScoreRecord>,
    pub summary: ScoreSummary,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn accuracy(values: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    mean(values.flatten().map(|b| if b { 1.0 } else { 0.0 }))
}

pub fn score_results(results: &[ForecastResult], cfg: &StudyConfig) -> Result<ScoreTable> {
    let p0 = &cfg.evaluation.p0_levels;
    let records: Vec<ScoreRecord> = results.iter().filter_map(|r| ScoreRecord::from_result(r, p0)).collect();
    if records.is_empty() {
        return Err(Error::InvalidInput("no forecasts with realised values to score".into()));
    }
    let alphas = &cfg.evaluation.alpha_grid;
    let hits: Vec<Vec<bool>> = records.iter().map(|r| r.coverage.clone()).collect();
    let coverage = empirical_coverage(&hits, alphas)?;
    let summary = ScoreSummary {
        n: records.len(),
        mae: mean(records.iter().map(|r| r.abs_error)).expect("non-empty"),
        bench_mae: mean(records.iter().filter_map(|r| r.bench_abs_error)),
        n_bench: records.iter().filter(|r| r.bench_abs_error.is_some()).count(),
        crps: mean(records.iter().map(|r| r.crps)).expect("non-empty"),
        ace: ace(&coverage),
        coverage,
        spread_accuracy: p0
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, accuracy(records.iter().map(|r| r.spread_correct[k]))))
            .collect(),
        bench_spread_accuracy: accuracy(records.iter().map(|r| r.bench_spread_correct)),
        rest_accuracy: accuracy(records.iter().map(|r| r.rest_correct)),
        fallback_share: mean(records.iter().map(|r| if r.fallback { 1.0 } else { 0.0 })).expect("non-empty"),
    };
    Ok(ScoreTable { records, summary })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ScoreTable {
    pub fn write_records<W: Write>(&self, writer: W, p0_levels: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = [
            "date",
            "hour",
            "lag_hours",
            "y_true",
            "abs_error",
            "bench_abs_error",
            "crps",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(p0_levels.iter().map(|p| format!("spread_correct_p0_{p}")));
        header.extend(["bench_spread_correct".into(), "rest_correct".into(), "fallback".into()]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.date.to_string(),
                r.hour.to_string(),
                r.lag_hours.to_string(),
                r.y_true.to_string(),
                r.abs_error.to_string(),
                fmt_opt(r.bench_abs_error),
                r.crps.to_string(),
            ];
            row.extend(r.spread_correct.iter().map(|c| fmt_opt(*c)));
            row.extend([fmt_opt(r.bench_spread_correct), fmt_opt(r.rest_correct), r.fallback.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// MAE, live MAE and CRPS per delivery hour.
    pub fn write_by_hour<W: Write>(&self, writer: W) -> Result<()> {
        let mut groups: BTreeMap<u8, Vec<&ScoreRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.hour).or_default().push(r);
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["hour", "n", "mae", "bench_mae", "crps"])?;
        for (hour, rs) in groups {
            w.write_record([
                hour.to_string(),
                rs.len().to_string(),
                fmt_opt(mean(rs.iter().map(|r| r.abs_error))),
                fmt_opt(mean(rs.iter().filter_map(|r| r.bench_abs_error))),
                fmt_opt(mean(rs.iter().map(|r| r.crps))),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_coverage<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "coverage"])?;
        let c = &self.summary.coverage;
        for (a, v) in c.alphas.iter().zip(&c.coverage) {
            w.write_record([a.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores a study directory and writes `scores.csv`, `scores_by_hour.csv`,
/// `coverage.csv` and `summary.json`.
pub fn score_dir(dir: &Path, cfg: &StudyConfig) -> Result<ScoreTable> {
    let results = load_results(dir, None)?;
    let table = score_results(&results, cfg)?;
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    table.write_records(create("scores.csv")?, &cfg.evaluation.p0_levels)?;
    table.write_by_hour(create("scores_by_hour.csv")?)?;
    table.write_coverage(create("coverage.csv")?)?;
    let mut summary = create("summary.json")?;
    serde_json::to_writer_pretty(&mut summary, &table.summary)?;
    summary.flush()?;
    Ok(table)
}
