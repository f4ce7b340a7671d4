//! Transaction ingestion and reproduction of the intraday price indices.

mod product;
mod series;
mod stats;
mod transaction;

pub use product::{localise, CreationTime, ProductKey, GATE_LEAD_MINUTES, MARKET_OPEN_HOUR};
pub use series::{build_live_series, creation_grid, LiveSeries, DEFAULT_GRID_SIZE};
pub use stats::{eod_stats, filter_eligible, live_stats, LiveStats, MarketBooks, ProductBook};
pub use transaction::{
    format_timestamp, parse_timestamp, parse_transactions, read_transactions, write_transactions,
    ParseReport, SelfTrade, Side, SkippedRow, Transaction,
};
