use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BUY" | "B" => Some(Side::Buy),
            "SELL" | "S" => Some(Side::Sell),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        }
    }
}

/// Self-trade flag. `Unknown` occurs for cross-NEMO trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelfTrade {
    Yes,
    No,
    Unknown,
}

impl SelfTrade {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Y" | "YES" => Some(SelfTrade::Yes),
            "N" | "NO" => Some(SelfTrade::No),
            "U" | "UNKNOWN" => Some(SelfTrade::Unknown),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            SelfTrade::Yes => "Y",
            SelfTrade::No => "N",
            SelfTrade::Unknown => "U",
        }
    }
}

/// One executed intraday trade, as listed in the exchange transaction feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub trade_id: String,
    pub side: Side,
    /// EUR/MWh.
    pub price: f64,
    /// MWh, strictly positive.
    pub volume: f64,
    pub execution_time: DateTime<Utc>,
    pub delivery_start: DateTime<Utc>,
    pub delivery_end: DateTime<Utc>,
    pub self_trade: SelfTrade,
    pub market_area: String,
    pub product: String,
}

/// A row that could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

/// Parsed transactions plus the rows that were skipped.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub transactions: Vec<Transaction>,
    pub skipped: Vec<SkippedRow>,
}

const REQUIRED: [&str; 8] = [
    "TradeId",
    "Side",
    "Price",
    "Volume",
    "ExecutionTime",
    "DeliveryStart",
    "DeliveryEnd",
    "SelfTrade",
];

/// Parses an ISO-8601 timestamp. Values without an offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_transactions(path: impl AsRef<Path>) -> Result<ParseReport> {
    read_transactions(File::open(path)?)
}

pub fn read_transactions<R: Read>(reader: R) -> Result<ParseReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 8];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let area_col = col("MarketArea").or_else(|| col("DeliveryArea"));
    let product_col = col("Product");

    let mut report = ParseReport::default();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push(SkippedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let field = |c: usize| record.get(c).unwrap_or("");
        match parse_row(&field, &idx, area_col, product_col) {
            Ok(tx) => report.transactions.push(tx),
            Err(reason) => report.skipped.push(SkippedRow { line, reason }),
        }
    }
    Ok(report)
}

fn parse_row<'a>(
    field: &dyn Fn(usize) -> &'a str,
    idx: &[usize; 8],
    area_col: Option<usize>,
    product_col: Option<usize>,
) -> std::result::Result<Transaction, String> {
    let trade_id = field(idx[0]).to_string();
    if trade_id.is_empty() {
        return Err("empty TradeId".into());
    }
    let side = Side::parse(field(idx[1])).ok_or_else(|| format!("bad Side `{}`", field(idx[1])))?;
    let price: f64 = field(idx[2])
        .parse()
        .map_err(|_| format!("bad Price `{}`", field(idx[2])))?;
    let volume: f64 = field(idx[3])
        .parse()
        .map_err(|_| format!("bad Volume `{}`", field(idx[3])))?;
    if !price.is_finite() {
        return Err("non-finite Price".into());
    }
    if !(volume.is_finite() && volume > 0.0) {
        return Err(format!("Volume must be positive, got {volume}"));
    }
    let ts = |c: usize, name: &str| {
        parse_timestamp(field(c)).ok_or_else(|| format!("bad {name} `{}`", field(c)))
    };
    let execution_time = ts(idx[4], "ExecutionTime")?;
    let delivery_start = ts(idx[5], "DeliveryStart")?;
    let delivery_end = ts(idx[6], "DeliveryEnd")?;
    if delivery_start >= delivery_end {
        return Err("DeliveryStart must precede DeliveryEnd".into());
    }
    let self_trade = SelfTrade::parse(field(idx[7]))
        .ok_or_else(|| format!("bad SelfTrade `{}`", field(idx[7])))?;
    Ok(Transaction {
        trade_id,
        side,
        price,
        volume,
        execution_time,
        delivery_start,
        delivery_end,
        self_trade,
        market_area: area_col.map(|c| field(c).to_string()).unwrap_or_default(),
        product: product_col.map(|c| field(c).to_string()).unwrap_or_default(),
    })
}

/// Writes transactions in the same schema [`read_transactions`] accepts.
pub fn write_transactions<W: Write>(writer: W, txs: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "TradeId",
        "Side",
        "Price",
        "Volume",
        "ExecutionTime",
        "DeliveryStart",
        "DeliveryEnd",
        "SelfTrade",
        "MarketArea",
        "Product",
    ])?;
    for t in txs {
        w.write_record([
            t.trade_id.as_str(),
            t.side.as_str(),
            &t.price.to_string(),
            &t.volume.to_string(),
            &format_timestamp(&t.execution_time),
            &format_timestamp(&t.delivery_start),
            &format_timestamp(&t.delivery_end),
            t.self_trade.as_str(),
            &t.market_area,
            &t.product,
        ])?;
    }
    w.flush()?;
    Ok(())
}
