//! Day-ahead auction curves, their clearing point and the demand-elasticity
//! transfer that turns a supply/demand pair into a single supply curve.
//!
//! Curves are breakpoint lists evaluated by linear interpolation. Seen as a
//! function of price, a curve's volume is clamped to its first/last breakpoint
//! volume outside its price range; seen as a function of volume, its price is
//! held constant outside its volume range.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite differences (MWh) used for the merit-order slopes.
pub const SLOPE_DELTAS: [f64; 3] = [500.0, 1000.0, 2000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveKind {
    Supply,
    Demand,
}

impl CurveKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supply" | "sell" => Some(CurveKind::Supply),
            "demand" | "purchase" | "buy" => Some(CurveKind::Demand),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Supply => "supply",
            CurveKind::Demand => "demand",
        }
    }
}

/// Aggregated bid or offer curve as `(volume, price)` breakpoints ordered by volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionCurve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
}

impl AuctionCurve {
    /// Validates ordering: volumes non-decreasing, prices non-decreasing for
    /// supply and non-increasing for demand.
    pub fn new(kind: CurveKind, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "{} curve needs at least 2 points",
                kind.as_str()
            )));
        }
        if points.iter().any(|(v, p)| !v.is_finite() || !p.is_finite()) {
            return Err(Error::InvalidCurve("non-finite breakpoint".into()));
        }
        for w in points.windows(2) {
            let (v0, p0) = w[0];
            let (v1, p1) = w[1];
            let price_ok = match kind {
                CurveKind::Supply => p1 >= p0,
                CurveKind::Demand => p1 <= p0,
            };
            if v1 < v0 || !price_ok {
                return Err(Error::InvalidCurve(format!(
                    "{} curve not monotone at ({v0}, {p0}) -> ({v1}, {p1})",
                    kind.as_str()
                )));
            }
        }
        Ok(Self { kind, points })
    }

    /// Breakpoints reordered so that price is non-decreasing.
    fn by_price(&self) -> Vec<(f64, f64)> {
        match self.kind {
            CurveKind::Supply => self.points.clone(),
            CurveKind::Demand => self.points.iter().rev().copied().collect(),
        }
    }
}

/// Volumes `(lo, hi)` at which a price-sorted polyline attains price `p`,
/// clamped to the end volumes outside the price range.
fn volume_range(by_price: &[(f64, f64)], p: f64) -> (f64, f64) {
    let n = by_price.len();
    let first = by_price.partition_point(|&(_, q)| q < p);
    let a = if first == 0 {
        by_price[0].0
    } else if first == n {
        by_price[n - 1].0
    } else if by_price[first].1 == p {
        by_price[first].0
    } else {
        interp_volume(by_price[first - 1], by_price[first], p)
    };
    let after = by_price.partition_point(|&(_, q)| q <= p);
    let b = if after == 0 {
        by_price[0].0
    } else if after == n {
        by_price[n - 1].0
    } else if by_price[after - 1].1 == p {
        by_price[after - 1].0
    } else {
        interp_volume(by_price[after - 1], by_price[after], p)
    };
    (a.min(b), a.max(b))
}

fn interp_volume((v0, p0): (f64, f64), (v1, p1): (f64, f64), p: f64) -> f64 {
    v0 + (p - p0) / (p1 - p0) * (v1 - v0)
}

/// Price range on which both price-sorted curves are defined.
fn common_price_range(a: &[(f64, f64)], b: &[(f64, f64)]) -> Option<(f64, f64)> {
    let lo = a[0].1.max(b[0].1);
    let hi = a[a.len() - 1].1.min(b[b.len() - 1].1);
    (lo <= hi).then_some((lo, hi))
}

/// Sorted union of breakpoint prices of both curves inside their common price range.
fn breakpoint_prices(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<f64> {
    let Some((lo, hi)) = common_price_range(a, b) else {
        return Vec::new();
    };
    let mut prices: Vec<f64> = a
        .iter()
        .chain(b)
        .map(|x| x.1)
        .filter(|&p| p >= lo && p <= hi)
        .chain([lo, hi])
        .collect();
    prices.sort_by(|a, b| a.total_cmp(b));
    prices.dedup();
    prices
}

/// Market clearing point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clearing {
    pub price: f64,
    pub volume: f64,
}

/// Midpoint of the overlap of two volume ranges. Ranges that miss each other
/// by rounding give the midpoint of the gap instead.
fn midpoint_overlap((a0, a1): (f64, f64), (b0, b1): (f64, f64)) -> f64 {
    0.5 * (a0.max(b0) + a1.min(b1))
}

/// Intersection of the supply and demand polylines.
///
/// Only the price range covered by both curves is searched. Where the curves
/// overlap along a segment (common price plateau or common
/// vertical step) the midpoint of the overlap is returned.
pub fn clearing(supply: &AuctionCurve, demand: &AuctionCurve) -> Result<Clearing> {
    if supply.kind != CurveKind::Supply || demand.kind != CurveKind::Demand {
        return Err(Error::InvalidInput("clearing expects (supply, demand)".into()));
    }
    let s = supply.by_price();
    let d = demand.by_price();
    let prices = breakpoint_prices(&s, &d);
    let excess = |p: f64| {
        let (s_lo, s_hi) = volume_range(&s, p);
        let (d_lo, d_hi) = volume_range(&d, p);
        (s_lo - d_hi, s_hi - d_lo)
    };
    let k = prices
        .iter()
        .position(|&p| excess(p).1 >= 0.0)
        .ok_or(Error::NoClearing)?;
    let (e_lo, _) = excess(prices[k]);
    let price = if e_lo <= 0.0 {
        let mut last = k;
        while last + 1 < prices.len() && excess(prices[last + 1]).0 <= 0.0 {
            last += 1;
        }
        0.5 * (prices[k] + prices[last])
    } else if k == 0 {
        return Err(Error::NoClearing);
    } else {
        let a = excess(prices[k - 1]).1;
        let p0 = prices[k - 1];
        p0 + (0.0 - a) / (e_lo - a) * (prices[k] - p0)
    };
    let volume = midpoint_overlap(volume_range(&s, price), volume_range(&d, price));
    Ok(Clearing { price, volume })
}

/// Supply curve carrying the elasticity of both auction sides, facing a
/// perfectly inelastic demand at `reference_demand_volume`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedSupply {
    pub points: Vec<(f64, f64)>,
    pub reference_demand_volume: f64,
    pub clearing_price: f64,
}

/// Shifts supply horizontally by the demand's deviation from the clearing volume:
/// `S'(p) = S(p) + V* - D(p)`.
pub fn transform(supply: &AuctionCurve, demand: &AuctionCurve) -> Result<TransformedSupply> {
    let c = clearing(supply, demand)?;
    let s = supply.by_price();
    let d = demand.by_price();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for p in breakpoint_prices(&s, &d) {
        let (s_lo, s_hi) = volume_range(&s, p);
        let (d_lo, d_hi) = volume_range(&d, p);
        let lo = s_lo + c.volume - d_hi;
        let hi = s_hi + c.volume - d_lo;
        for v in [lo, hi] {
            if points.last() != Some(&(v, p)) {
                points.push((v, p));
            }
        }
    }
    // Guard against rounding producing tiny volume reversals.
    for i in 1..points.len() {
        if points[i].0 < points[i - 1].0 {
            points[i].0 = points[i - 1].0;
        }
    }
    Ok(TransformedSupply {
        points,
        reference_demand_volume: c.volume,
        clearing_price: c.price,
    })
}

impl TransformedSupply {
    /// Wraps a plain supply curve (used when demand is already inelastic).
    pub fn from_points(points: Vec<(f64, f64)>, reference_demand_volume: f64) -> Result<Self> {
        let curve = AuctionCurve::new(CurveKind::Supply, points)?;
        let clearing_price = price_on(&curve.points, reference_demand_volume);
        Ok(Self {
            points: curve.points,
            reference_demand_volume,
            clearing_price,
        })
    }

    pub fn price_at(&self, volume: f64) -> f64 {
        price_on(&self.points, volume)
    }

    /// Volume at which the curve reaches `price`; the midpoint of a price plateau.
    pub fn volume_at_price(&self, price: f64) -> f64 {
        let (lo, hi) = volume_range(&self.points, price);
        0.5 * (lo + hi)
    }

    pub fn volume_domain(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }
}

/// Right-continuous linear interpolation with constant extrapolation.
fn price_on(points: &[(f64, f64)], v: f64) -> f64 {
    let idx = points.partition_point(|&(x, _)| x <= v);
    if idx == 0 {
        return points[0].1;
    }
    if idx == points.len() {
        return points[idx - 1].1;
    }
    let (v0, p0) = points[idx - 1];
    let (v1, p1) = points[idx];
    p0 + (v - v0) / (v1 - v0) * (p1 - p0)
}

/// Central finite-difference slope `(P(v + Δ/2) - P(v - Δ/2)) / Δ`.
///
/// Near the ends of the volume domain the window is shifted inside the
/// domain (one-sided difference); a domain narrower than `delta` uses the
/// whole domain.
pub fn slope_at(curve: &TransformedSupply, volume: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("finite difference must be positive, got {delta}")));
    }
    let (lo, hi) = curve.volume_domain();
    if hi <= lo {
        return Err(Error::InvalidCurve("curve spans a single volume".into()));
    }
    let (a, b) = if hi - lo <= delta {
        (lo, hi)
    } else if volume - delta / 2.0 < lo {
        (lo, lo + delta)
    } else if volume + delta / 2.0 > hi {
        (hi - delta, hi)
    } else {
        (volume - delta / 2.0, volume + delta / 2.0)
    };
    Ok((curve.price_at(b) - curve.price_at(a)) / (b - a))
}

/// Supply and demand curve of one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub supply: AuctionCurve,
    pub demand: AuctionCurve,
}

pub type CurveBook = BTreeMap<(NaiveDate, u8), CurvePair>;

/// Reads auction curves from CSV with columns `date, hour, kind, volume, price`.
/// Rows of one curve must appear in curve order.
pub fn read_curves<R: Read>(reader: R) -> Result<CurveBook> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ci_date, ci_hour, ci_kind, ci_vol, ci_price) =
        (col("date")?, col("hour")?, col("kind")?, col("volume")?, col("price")?);
    type Points = Vec<(f64, f64)>;
    let mut raw: BTreeMap<(NaiveDate, u8), (Points, Points)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| Error::InvalidCurve(format!("line {line}: bad {what}"));
        let date = NaiveDate::parse_from_str(&rec[ci_date], "%Y-%m-%d").map_err(|_| bad("date"))?;
        let hour: u8 = rec[ci_hour].parse().map_err(|_| bad("hour"))?;
        let kind = CurveKind::parse(&rec[ci_kind]).ok_or_else(|| bad("kind"))?;
        let v: f64 = rec[ci_vol].parse().map_err(|_| bad("volume"))?;
        let p: f64 = rec[ci_price].parse().map_err(|_| bad("price"))?;
        let entry = raw.entry((date, hour)).or_default();
        match kind {
            CurveKind::Supply => entry.0.push((v, p)),
            CurveKind::Demand => entry.1.push((v, p)),
        }
    }
    raw.into_iter()
        .map(|(k, (s, d))| {
            Ok((
                k,
                CurvePair {
                    supply: AuctionCurve::new(CurveKind::Supply, s)?,
                    demand: AuctionCurve::new(CurveKind::Demand, d)?,
                },
            ))
        })
        .collect()
}

pub fn write_curves<W: Write>(writer: W, curves: &CurveBook) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "hour", "kind", "volume", "price"])?;
    for ((date, hour), pair) in curves {
        for curve in [&pair.supply, &pair.demand] {
            for (v, p) in &curve.points {
                w.write_record([
                    date.to_string(),
                    hour.to_string(),
                    curve.kind.as_str().to_string(),
                    v.to_string(),
                    p.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
