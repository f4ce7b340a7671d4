use std::io::Write;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::product::ProductKey;
use super::stats::{LiveStats, ProductBook};
use super::transaction::format_timestamp;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 250;

/// Live statistics of one product on an even creation-time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiveSeries {
    pub product: ProductKey,
    pub grid: Vec<DateTime<Utc>>,
    pub values: Vec<LiveStats>,
    pub eod: LiveStats,
}

fn nanos(t: DateTime<Utc>) -> i128 {
    t.timestamp() as i128 * 1_000_000_000 + t.timestamp_subsec_nanos() as i128
}

fn from_nanos(n: i128) -> DateTime<Utc> {
    let secs = n.div_euclid(1_000_000_000) as i64;
    let sub = n.rem_euclid(1_000_000_000) as u32;
    Utc.timestamp_opt(secs, sub).single().expect("grid time in range")
}

/// Evenly spaced creation times from market open (15:00 on d-1) to delivery end, both included.
///
/// Points are rounded to whole nanoseconds; the end points are exact.
pub fn creation_grid(product: &ProductKey, grid_size: usize) -> Result<Vec<DateTime<Utc>>> {
    if grid_size < 2 {
        return Err(Error::InvalidInput(format!("grid size must be >= 2, got {grid_size}")));
    }
    let a = nanos(product.market_open());
    let b = nanos(product.delivery_end());
    let steps = (grid_size - 1) as i128;
    Ok((0..grid_size as i128)
        .map(|i| from_nanos(a + ((b - a) * i) / steps))
        .collect())
}

pub fn build_live_series(book: &ProductBook, grid_size: usize) -> Result<LiveSeries> {
    let grid = creation_grid(&book.product, grid_size)?;
    let values = grid.iter().map(|&t| book.live_stats(t)).collect();
    Ok(LiveSeries {
        product: book.product,
        grid,
        values,
        eod: book.eod_stats(),
    })
}

fn lerp_opt(
    a: Option<f64>,
    b: Option<f64>,
    w: f64,
    earlier: impl Fn() -> Option<f64>,
) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + w * (b - a)),
        _ => earlier(),
    }
}

impl LiveSeries {
    /// Statistics at an arbitrary creation time.
    ///
    /// Values are linearly interpolated between neighbouring grid points when
    /// both are defined; otherwise the nearest defined value at or before `tau`
    /// is used. Outside the grid the end values are held.
    pub fn at(&self, tau: DateTime<Utc>) -> LiveStats {
        let n = self.grid.len();
        let idx = self.grid.partition_point(|&g| g <= tau);
        if idx == 0 {
            let mut s = self.values[0].clone();
            s.creation_time = tau;
            return s;
        }
        if idx == n {
            let mut s = self.values[n - 1].clone();
            s.creation_time = tau;
            return s;
        }
        let (i0, i1) = (idx - 1, idx);
        let (t0, t1) = (nanos(self.grid[i0]), nanos(self.grid[i1]));
        let w = (nanos(tau) - t0) as f64 / (t1 - t0) as f64;
        let (a, b) = (&self.values[i0], &self.values[i1]);
        let earlier = |f: fn(&LiveStats) -> Option<f64>| {
            move || self.values[..=i0].iter().rev().find_map(f)
        };
        LiveStats {
            id1: lerp_opt(a.id1, b.id1, w, earlier(|s| s.id1)),
            id3: lerp_opt(a.id3, b.id3, w, earlier(|s| s.id3)),
            idfull: lerp_opt(a.idfull, b.idfull, w, earlier(|s| s.idfull)),
            high: lerp_opt(a.high, b.high, w, earlier(|s| s.high)),
            low: lerp_opt(a.low, b.low, w, earlier(|s| s.low)),
            last: lerp_opt(a.last, b.last, w, earlier(|s| s.last)),
            deviat: lerp_opt(a.deviat, b.deviat, w, earlier(|s| s.deviat)),
            v_buy: a.v_buy + w * (b.v_buy - a.v_buy),
            v_sell: a.v_sell + w * (b.v_sell - a.v_sell),
            creation_time: tau,
        }
    }

    /// Writes the series as CSV; undefined values are empty cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "tau", "id1", "id3", "idfull", "high", "low", "last", "deviat", "v_buy", "v_sell",
        ])?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.values {
            w.write_record([
                format_timestamp(&s.creation_time),
                cell(s.id1),
                cell(s.id3),
                cell(s.idfull),
                cell(s.high),
                cell(s.low),
                cell(s.last),
                cell(s.deviat),
                s.v_buy.to_string(),
                s.v_sell.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::transaction::{SelfTrade, Side, Transaction};
    use chrono::{Duration, NaiveDate};

    fn product() -> ProductKey {
        ProductKey::new(NaiveDate::from_ymd_opt(2022, 11, 4).unwrap(), 12).unwrap()
    }

    fn book(prices_minutes: &[(f64, i64)]) -> ProductBook {
        let p = product();
        let txs: Vec<Transaction> = prices_minutes
            .iter()
            .enumerate()
            .map(|(i, &(price, m))| Transaction {
                trade_id: format!("T{i}"),
                side: if i % 2 == 0 { Side::Buy } else { Side::Sell },
                price,
                volume: 1.0 + i as f64,
                execution_time: p.delivery_start() - Duration::minutes(m),
                delivery_start: p.delivery_start(),
                delivery_end: p.delivery_end(),
                self_trade: SelfTrade::No,
                market_area: String::new(),
                product: String::new(),
            })
            .collect();
        ProductBook::from_raw(&txs, p)
    }

    #[test]
    fn two_point_grid() {
        let g = creation_grid(&product(), 2).unwrap();
        assert_eq!(g, vec![product().market_open(), product().delivery_end()]);
        assert!(creation_grid(&product(), 1).is_err());
    }

    #[test]
    fn default_grid_strictly_increasing() {
        let g = creation_grid(&product(), DEFAULT_GRID_SIZE).unwrap();
        assert_eq!(g.len(), 250);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_values_match_direct_stats() {
        let b = book(&[(50.0, 600), (60.0, 300), (55.0, 90), (70.0, 20)]);
        let s = build_live_series(&b, 40).unwrap();
        for (t, v) in s.grid.iter().zip(&s.values) {
            assert_eq!(*v, b.live_stats(*t));
        }
        assert_eq!(s.eod, b.eod_stats());
    }

    #[test]
    fn interpolation_between_defined_points() {
        let b = book(&[(50.0, 600), (70.0, 300)]);
        let s = build_live_series(&b, 250).unwrap();
        let i = s.values.iter().position(|v| v.idfull == Some(190.0 / 3.0)).unwrap();
        let mid = s.grid[i - 1] + (s.grid[i] - s.grid[i - 1]) / 2;
        let a = s.values[i - 1].idfull.unwrap();
        let c = s.values[i].idfull.unwrap();
        assert!((s.at(mid).idfull.unwrap() - 0.5 * (a + c)).abs() < 1e-9);
    }

    #[test]
    fn interpolation_falls_back_to_earlier_value() {
        let b = book(&[(50.0, 600)]);
        let s = build_live_series(&b, 250).unwrap();
        let first = s.values.iter().position(|v| v.idfull.is_some()).unwrap();
        let before = s.grid[first - 1] + Duration::seconds(1);
        assert_eq!(s.at(before).idfull, None);
        let later = s.grid[first] + Duration::seconds(1);
        assert_eq!(s.at(later).idfull, Some(50.0));
    }

    #[test]
    fn csv_marks_undefined_as_empty() {
        let b = book(&[(50.0, 60)]);
        let s = build_live_series(&b, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,id1,id3,idfull,high,low,last,deviat,v_buy,v_sell");
        assert!(lines[1].ends_with(",,,,,,,,0,0"));
        assert_eq!(lines.len(), 4);
    }
}
