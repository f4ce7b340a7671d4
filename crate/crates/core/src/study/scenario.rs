use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::CreationTime;
use crate::selection::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Creation at `hour:00` on the delivery day shifted by `day_offset`.
    FixedTau { hour: u8, day_offset: i64 },
    /// Creation `lag` hours before delivery start.
    FixedLag { lag: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ScenarioKind,
    pub selector: Method,
    pub test_start: NaiveDate,
    pub test_days: usize,
    /// Delivery hours to forecast; hours not after a fixed creation time are skipped.
    pub hours: Vec<u8>,
}

impl ScenarioSpec {
    /// Preset scenarios `a`..`f`; `lag` is used by the fixed-lag presets `e` and `f`.
    pub fn preset(letter: &str, lag: u32, test_start: NaiveDate, test_days: usize) -> Result<Self> {
        let (kind, selector) = match letter {
            "a" => (ScenarioKind::FixedTau { hour: 23, day_offset: -1 }, Method::Omp),
            "b" => (ScenarioKind::FixedTau { hour: 5, day_offset: 0 }, Method::Omp),
            "c" => (ScenarioKind::FixedTau { hour: 11, day_offset: 0 }, Method::Omp),
            "d" => (ScenarioKind::FixedTau { hour: 17, day_offset: 0 }, Method::Omp),
            "e" => (ScenarioKind::FixedLag { lag }, Method::Omp),
            "f" => (ScenarioKind::FixedLag { lag }, Method::Lasso),
            _ => return Err(Error::Config(format!("unknown scenario `{letter}`"))),
        };
        let spec = Self {
            name: match kind {
                ScenarioKind::FixedLag { lag } => format!("{letter}_lag{lag}"),
                ScenarioKind::FixedTau { .. } => letter.to_string(),
            },
            kind,
            selector,
            test_start,
            test_days,
            hours: (0..24).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.test_days == 0 {
            return Err(Error::Config("scenario has no test days".into()));
        }
        if self.hours.iter().any(|&h| h > 23) {
            return Err(Error::Config("delivery hours must lie in 0..=23".into()));
        }
        match self.kind {
            ScenarioKind::FixedLag { lag: 0 } => Err(Error::Config("lag must be at least one hour".into())),
            ScenarioKind::FixedTau { hour, day_offset } if hour > 23 || day_offset > 0 => {
                Err(Error::Config("creation time must lie before the delivery day ends".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn test_dates(&self) -> Vec<NaiveDate> {
        (0..self.test_days)
            .map(|i| self.test_start + Duration::days(i as i64))
            .collect()
    }

    /// Forecast hours of each test day; a fixed creation time only admits hours after it.
    pub fn forecast_hours(&self) -> Vec<u8> {
        let mut hours: Vec<u8> = match self.kind {
            ScenarioKind::FixedTau { hour, day_offset: 0 } => self.hours.iter().copied().filter(|&h| h > hour).collect(),
            _ => self.hours.clone(),
        };
        hours.sort_unstable();
        hours.dedup();
        hours
    }

    pub fn keys(&self) -> Vec<(NaiveDate, u8)> {
        let hours = self.forecast_hours();
        self.test_dates()
            .into_iter()
            .flat_map(|d| hours.iter().map(move |&h| (d, h)))
            .collect()
    }

    pub fn creation_time(&self, day: NaiveDate, hour: u8) -> CreationTime {
        match self.kind {
            ScenarioKind::FixedTau { hour: t, day_offset } => {
                CreationTime::new(day, day_offset * 24 * 60 + t as i64 * 60)
            }
            ScenarioKind::FixedLag { lag } => CreationTime::before_hour(day, hour, lag as f64),
        }
    }
}
