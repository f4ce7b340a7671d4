use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{localise, CreationTime};

/// Local hour on d-1 from which day-ahead forecasts for day d are published.
pub const DAY_AHEAD_PUBLICATION_HOUR: i64 = 18;
/// Local hour on d from which intraday forecasts for day d are published.
pub const INTRADAY_PUBLICATION_HOUR: i64 = 8;

/// When the value of a covariate for delivery `(d, h)` becomes known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Availability {
    /// Known from 18:00 on d-1.
    DayAhead,
    /// Known from 08:00 on d; replaces the day-ahead value of the same series.
    Intraday,
    /// Known in advance (calendar, daylight, climatology).
    Static,
    /// Daily value for date D, known from midnight after D; the most recent
    /// known date is used.
    MarketState,
}

impl Availability {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day_ahead" | "dayahead" | "da" => Some(Self::DayAhead),
            "intraday" | "id" => Some(Self::Intraday),
            "static" | "calendar" => Some(Self::Static),
            "market_state" | "daily" => Some(Self::MarketState),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DayAhead => "day_ahead",
            Self::Intraday => "intraday",
            Self::Static => "static",
            Self::MarketState => "market_state",
        }
    }
}

fn local_time(day: NaiveDate, hour: i64) -> chrono::DateTime<chrono::Utc> {
    localise(day.and_hms_opt(0, 0, 0).expect("midnight") + Duration::hours(hour))
}

type HourlySeries = BTreeMap<(NaiveDate, u8), f64>;

/// Hourly covariate series tagged with availability classes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateStore {
    series: BTreeMap<String, BTreeMap<Availability, HourlySeries>>,
}

impl CovariateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, class: Availability, day: NaiveDate, hour: u8, value: f64) {
        let hour = if class == Availability::MarketState { 0 } else { hour };
        self.series
            .entry(name.to_string())
            .or_default()
            .entry(class)
            .or_default()
            .insert((day, hour), value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.series.contains_key(name)
    }

    pub fn has_class(&self, name: &str, class: Availability) -> bool {
        self.series.get(name).is_some_and(|m| m.contains_key(&class))
    }

    pub fn classes(&self, name: &str) -> Vec<Availability> {
        self.series
            .get(name)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Raw value of one class, ignoring availability.
    pub fn raw(&self, name: &str, class: Availability, day: NaiveDate, hour: u8) -> Option<f64> {
        self.series.get(name)?.get(&class)?.get(&(day, hour)).copied()
    }

    /// Value of one class for delivery `(day, hour)` if it is known at `tau`.
    pub fn value_of_class(
        &self,
        name: &str,
        class: Availability,
        day: NaiveDate,
        hour: u8,
        tau: &CreationTime,
    ) -> Option<f64> {
        let values = self.series.get(name)?.get(&class)?;
        let tau_utc = tau.to_utc();
        match class {
            Availability::Static => values.get(&(day, hour)).copied(),
            Availability::DayAhead => {
                let published = local_time(day - Duration::days(1), DAY_AHEAD_PUBLICATION_HOUR);
                (tau_utc >= published).then(|| values.get(&(day, hour)).copied()).flatten()
            }
            Availability::Intraday => {
                let published = local_time(day, INTRADAY_PUBLICATION_HOUR);
                (tau_utc >= published).then(|| values.get(&(day, hour)).copied()).flatten()
            }
            Availability::MarketState => {
                // Date D is known from local midnight starting D + 1.
                let latest = values
                    .range(..=(day, 0))
                    .rev()
                    .find(|((d, _), _)| local_time(*d + Duration::days(1), 0) <= tau_utc);
                latest.map(|(_, v)| *v)
            }
        }
    }

    /// Best value known at `tau`: intraday over day-ahead, then static and market state.
    pub fn value(&self, name: &str, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        [
            Availability::Intraday,
            Availability::DayAhead,
            Availability::Static,
            Availability::MarketState,
        ]
        .into_iter()
        .find_map(|c| self.value_of_class(name, c, day, hour, tau))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }

    /// Reads CSV with columns `series_name, date, hour, value, availability_class`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let idx = [
            col("series_name")?,
            col("date")?,
            col("hour")?,
            col("value")?,
            col("availability_class")?,
        ];
        let mut store = Self::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::InvalidInput(format!("covariates line {}: bad {what}", i + 2));
            let day = NaiveDate::parse_from_str(&rec[idx[1]], "%Y-%m-%d").map_err(|_| bad("date"))?;
            let hour: u8 = rec[idx[2]].parse().map_err(|_| bad("hour"))?;
            if hour > 23 {
                return Err(bad("hour"));
            }
            let cell = &rec[idx[3]];
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| bad("value"))?;
            let class = Availability::parse(&rec[idx[4]]).ok_or_else(|| bad("availability_class"))?;
            store.insert(&rec[idx[0]], class, day, hour, value);
        }
        Ok(store)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["series_name", "date", "hour", "value", "availability_class"])?;
        for (name, classes) in &self.series {
            for (class, values) in classes {
                for ((day, hour), v) in values {
                    w.write_record([
                        name.clone(),
                        day.to_string(),
                        hour.to_string(),
                        v.to_string(),
                        class.as_str().to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Number of stored values per series, for diagnostics.
    pub fn counts(&self) -> HashMap<String, usize> {
        self.series
            .iter()
            .map(|(k, m)| (k.clone(), m.values().map(|v| v.len()).sum()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn intraday_replaces_day_ahead_after_eight() {
        let d = date(2022, 8, 24);
        let mut s = CovariateStore::new();
        s.insert("E_sol", Availability::DayAhead, d, 12, 100.0);
        s.insert("E_sol", Availability::Intraday, d, 12, 120.0);
        assert_eq!(s.value("E_sol", d, 12, &CreationTime::new(d, 7 * 60 + 59)), Some(100.0));
        assert_eq!(s.value("E_sol", d, 12, &CreationTime::new(d, 8 * 60)), Some(120.0));
        // Day-ahead values are unknown before 18:00 on d-1.
        assert_eq!(s.value("E_sol", d, 12, &CreationTime::new(d, -7 * 60)), None);
        assert_eq!(s.value("E_sol", d, 12, &CreationTime::new(d, -6 * 60)), Some(100.0));
    }

    #[test]
    fn market_state_uses_most_recent_closed_day() {
        let d = date(2022, 8, 24);
        let mut s = CovariateStore::new();
        s.insert("M_gas", Availability::MarketState, date(2022, 8, 19), 0, 1.0);
        s.insert("M_gas", Availability::MarketState, date(2022, 8, 22), 0, 2.0);
        s.insert("M_gas", Availability::MarketState, date(2022, 8, 23), 0, 3.0);
        // At 23:00 on the 23rd the value of the 23rd is not yet known.
        assert_eq!(s.value("M_gas", d, 5, &CreationTime::new(d, -60)), Some(2.0));
        assert_eq!(s.value("M_gas", d, 5, &CreationTime::new(d, 60)), Some(3.0));
    }

    #[test]
    fn csv_round_trip() {
        let mut s = CovariateStore::new();
        s.insert("E_cons", Availability::DayAhead, date(2022, 1, 1), 3, 51234.5);
        s.insert("T_public", Availability::Static, date(2022, 1, 1), 3, 1.0);
        s.insert("M_gas", Availability::MarketState, date(2021, 12, 31), 0, 0.123456789);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(CovariateStore::read_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn missing_column_reported() {
        let csv = "series_name,date,hour,value\n";
        assert!(matches!(
            CovariateStore::read_csv(csv.as_bytes()),
            Err(Error::MissingColumn(c)) if c == "availability_class"
        ));
    }
}
