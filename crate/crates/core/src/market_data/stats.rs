use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::product::ProductKey;
use super::transaction::{SelfTrade, Side, Transaction};

/// Live index and statistics values of one product at one creation time.
///
/// Price statistics are `None` when no eligible trade contributes to them;
/// callers that need published-index semantics supply their own fall-back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveStats {
    pub id1: Option<f64>,
    pub id3: Option<f64>,
    pub idfull: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub last: Option<f64>,
    pub deviat: Option<f64>,
    pub v_buy: f64,
    pub v_sell: f64,
    pub creation_time: DateTime<Utc>,
}

impl LiveStats {
    pub fn empty(creation_time: DateTime<Utc>) -> Self {
        Self {
            id1: None,
            id3: None,
            idfull: None,
            high: None,
            low: None,
            last: None,
            deviat: None,
            v_buy: 0.0,
            v_sell: 0.0,
            creation_time,
        }
    }

    /// Named values in a fixed order, used for feature rows and CSV output.
    pub fn named_values(&self) -> [(&'static str, Option<f64>); 9] {
        [
            ("P_id1", self.id1),
            ("P_id3", self.id3),
            ("P_idfull", self.idfull),
            ("P_high", self.high),
            ("P_low", self.low),
            ("P_last", self.last),
            ("P_deviat", self.deviat),
            ("V_buy", Some(self.v_buy)),
            ("V_sell", Some(self.v_sell)),
        ]
    }
}

/// Keeps trades eligible for the indices of `product`.
///
/// Self-trades are excluded, delivery start and end must equal the hourly
/// product exactly, and of rows sharing a trade id only the first one in input
/// order is kept (the feed lists both sides of trades matched on-platform).
pub fn filter_eligible(txs: &[Transaction], product: &ProductKey) -> Vec<Transaction> {
    let start = product.delivery_start();
    let end = product.delivery_end();
    let mut seen = HashSet::new();
    txs.iter()
        .filter(|t| matches!(t.self_trade, SelfTrade::No | SelfTrade::Unknown))
        .filter(|t| t.delivery_start == start && t.delivery_end == end)
        .filter(|t| seen.insert(t.trade_id.clone()))
        .cloned()
        .collect()
}

fn vwap<'a>(trades: impl Iterator<Item = &'a Transaction>) -> Option<f64> {
    let (pv, v) = trades.fold((0.0, 0.0), |(pv, v), t| (pv + t.price * t.volume, v + t.volume));
    (v > 0.0).then(|| pv / v)
}

/// Windows of the ID3 and ID1 indices relative to delivery start, both ends closed.
fn index_window(start: DateTime<Utc>, hours: i64) -> (DateTime<Utc>, DateTime<Utc>) {
    (start - Duration::hours(hours), start - Duration::minutes(30))
}

/// Statistics over `trades`, which must all satisfy `execution_time <= tau`.
/// Ties in execution time resolve `last` to the later element.
fn stats_over(trades: &[&Transaction], product: &ProductKey, tau: DateTime<Utc>) -> LiveStats {
    let mut out = LiveStats::empty(tau);
    if trades.is_empty() {
        return out;
    }
    let start = product.delivery_start();
    let (w3_lo, w3_hi) = index_window(start, 3);
    let (w1_lo, w1_hi) = index_window(start, 1);
    out.idfull = vwap(trades.iter().copied());
    out.id3 = vwap(
        trades
            .iter()
            .copied()
            .filter(|t| t.execution_time >= w3_lo && t.execution_time <= w3_hi),
    );
    out.id1 = vwap(
        trades
            .iter()
            .copied()
            .filter(|t| t.execution_time >= w1_lo && t.execution_time <= w1_hi),
    );
    let mut high = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    let mut last = trades[0];
    let mut price_sum = 0.0;
    for &t in trades {
        high = high.max(t.price);
        low = low.min(t.price);
        if t.execution_time >= last.execution_time {
            last = t;
        }
        price_sum += t.price;
        match t.side {
            Side::Buy => out.v_buy += t.volume,
            Side::Sell => out.v_sell += t.volume,
        }
    }
    out.high = Some(high);
    out.low = Some(low);
    out.last = Some(last.price);
    let mean_price = price_sum / trades.len() as f64;
    let total_volume: f64 = trades.iter().map(|t| t.volume).sum();
    let weighted_dev: f64 = trades.iter().map(|t| t.volume * (t.price - mean_price)).sum();
    out.deviat = Some(weighted_dev / total_volume);
    out
}

/// Live statistics of `product` from the already filtered trades executed at or before `tau`.
pub fn live_stats(txs: &[Transaction], product: &ProductKey, tau: DateTime<Utc>) -> LiveStats {
    let trades: Vec<&Transaction> = txs.iter().filter(|t| t.execution_time <= tau).collect();
    stats_over(&trades, product, tau)
}

/// End-of-day values: live statistics at gate closure.
pub fn eod_stats(txs: &[Transaction], product: &ProductKey) -> LiveStats {
    live_stats(txs, product, product.gate_closure())
}

/// Eligible trades of one product sorted by execution time, for repeated queries.
#[derive(Debug, Clone)]
pub struct ProductBook {
    pub product: ProductKey,
    trades: Vec<Transaction>,
}

impl ProductBook {
    /// Builds a book from raw (unfiltered) transactions.
    pub fn from_raw(txs: &[Transaction], product: ProductKey) -> Self {
        Self::from_eligible(filter_eligible(txs, &product), product)
    }

    /// Builds a book from trades that already passed [`filter_eligible`].
    pub fn from_eligible(mut trades: Vec<Transaction>, product: ProductKey) -> Self {
        trades.sort_by_key(|t| t.execution_time);
        Self { product, trades }
    }

    pub fn trades(&self) -> &[Transaction] {
        &self.trades
    }

    pub fn live_stats(&self, tau: DateTime<Utc>) -> LiveStats {
        let n = self.trades.partition_point(|t| t.execution_time <= tau);
        let refs: Vec<&Transaction> = self.trades[..n].iter().collect();
        stats_over(&refs, &self.product, tau)
    }

    pub fn eod_stats(&self) -> LiveStats {
        self.live_stats(self.product.gate_closure())
    }

    /// The book restricted to trades executed at or before `tau`.
    pub fn truncated(&self, tau: DateTime<Utc>) -> Self {
        let n = self.trades.partition_point(|t| t.execution_time <= tau);
        Self {
            product: self.product,
            trades: self.trades[..n].to_vec(),
        }
    }
}

/// Product books for every product key found in a transaction feed.
#[derive(Debug, Clone, Default)]
pub struct MarketBooks {
    books: HashMap<ProductKey, ProductBook>,
}

impl MarketBooks {
    /// Groups raw transactions by hourly product and applies the eligibility rules.
    ///
    /// Transactions whose delivery interval is not an hourly product (blocks,
    /// quarter hours, the discarded autumn hour) are ignored. On the spring
    /// transition day the surrogate hour 2 receives a copy of hour 3.
    pub fn from_transactions(txs: &[Transaction]) -> Self {
        let mut grouped: HashMap<ProductKey, Vec<Transaction>> = HashMap::new();
        for t in txs {
            if t.delivery_end - t.delivery_start != Duration::hours(1) {
                continue;
            }
            if let Some(key) = ProductKey::from_delivery_start(t.delivery_start) {
                grouped.entry(key).or_default().push(t.clone());
            }
        }
        let spring_copies: Vec<(ProductKey, Vec<Transaction>)> = grouped
            .iter()
            .filter(|(k, _)| k.delivery_hour == 3)
            .filter_map(|(k, v)| {
                let surrogate = ProductKey {
                    delivery_day: k.delivery_day,
                    delivery_hour: 2,
                };
                (surrogate.delivery_start() == k.delivery_start()).then(|| (surrogate, v.clone()))
            })
            .collect();
        grouped.extend(spring_copies);
        let books = grouped
            .into_iter()
            .map(|(k, v)| (k, ProductBook::from_raw(&v, k)))
            .collect();
        Self { books }
    }

    pub fn get(&self, key: &ProductKey) -> Option<&ProductBook> {
        self.books.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &ProductKey> {
        self.books.keys()
    }

    pub fn len(&self) -> usize {
        self.books.len()
    }

    pub fn is_empty(&self) -> bool {
        self.books.is_empty()
    }

    /// Live statistics, undefined everywhere for products without trades.
    pub fn live_stats(&self, key: &ProductKey, tau: DateTime<Utc>) -> LiveStats {
        match self.books.get(key) {
            Some(b) => b.live_stats(tau),
            None => LiveStats::empty(tau),
        }
    }

    pub fn eod_stats(&self, key: &ProductKey) -> LiveStats {
        self.live_stats(key, key.gate_closure())
    }

    /// Every book truncated to trades executed at or before `tau`.
    pub fn truncated(&self, tau: DateTime<Utc>) -> Self {
        Self {
            books: self
                .books
                .iter()
                .map(|(k, b)| (*k, b.truncated(tau)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn product() -> ProductKey {
        ProductKey::new(NaiveDate::from_ymd_opt(2022, 11, 4).unwrap(), 7).unwrap()
    }

    fn tx(id: &str, side: Side, price: f64, volume: f64, minutes_before: i64) -> Transaction {
        let p = product();
        Transaction {
            trade_id: id.into(),
            side,
            price,
            volume,
            execution_time: p.delivery_start() - Duration::minutes(minutes_before),
            delivery_start: p.delivery_start(),
            delivery_end: p.delivery_end(),
            self_trade: SelfTrade::No,
            market_area: "DE".into(),
            product: String::new(),
        }
    }

    #[test]
    fn duplicate_trade_ids_counted_once() {
        let txs = vec![
            tx("A", Side::Buy, 100.0, 1.0, 60),
            tx("A", Side::Sell, 100.0, 1.0, 60),
        ];
        let kept = filter_eligible(&txs, &product());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].side, Side::Buy);
    }

    #[test]
    fn self_trades_excluded_unknown_kept() {
        let mut y = tx("A", Side::Buy, 100.0, 1.0, 60);
        y.self_trade = SelfTrade::Yes;
        let mut u = tx("B", Side::Buy, 100.0, 1.0, 60);
        u.self_trade = SelfTrade::Unknown;
        let kept = filter_eligible(&[y, u], &product());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].trade_id, "B");
    }

    #[test]
    fn block_delivery_excluded() {
        let mut block = tx("A", Side::Buy, 100.0, 1.0, 60);
        block.delivery_end = block.delivery_start + Duration::hours(3);
        assert!(filter_eligible(&[block], &product()).is_empty());
    }

    #[test]
    fn single_trade() {
        let txs = vec![tx("A", Side::Buy, 100.0, 5.0, 120)];
        let s = live_stats(&txs, &product(), product().gate_closure());
        assert_eq!(s.idfull, Some(100.0));
        assert_eq!(s.high, Some(100.0));
        assert_eq!(s.low, Some(100.0));
        assert_eq!(s.last, Some(100.0));
        assert_eq!(s.deviat, Some(0.0));
        assert_eq!(s.v_buy, 5.0);
        assert_eq!(s.v_sell, 0.0);
    }

    #[test]
    fn two_trade_vwap() {
        let txs = vec![
            tx("A", Side::Buy, 100.0, 2.0, 120),
            tx("B", Side::Sell, 110.0, 6.0, 90),
        ];
        let s = live_stats(&txs, &product(), product().gate_closure());
        assert_eq!(s.idfull, Some(107.5));
        // deviat = vwap - mean price = 107.5 - 105
        assert!((s.deviat.unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(s.last, Some(110.0));
    }

    #[test]
    fn before_first_trade_everything_undefined() {
        let txs = vec![tx("A", Side::Buy, 100.0, 2.0, 120)];
        let tau = product().delivery_start() - Duration::minutes(180);
        let s = live_stats(&txs, &product(), tau);
        assert_eq!(s, LiveStats::empty(tau));
    }

    #[test]
    fn index_windows_are_closed() {
        let txs = vec![
            tx("A", Side::Buy, 10.0, 1.0, 180),
            tx("B", Side::Buy, 20.0, 1.0, 60),
            tx("C", Side::Buy, 30.0, 1.0, 30),
            tx("D", Side::Buy, 40.0, 1.0, 10),
            tx("E", Side::Buy, 50.0, 1.0, 181),
        ];
        let s = eod_stats(&txs, &product());
        assert_eq!(s.id3, Some(20.0));
        assert_eq!(s.id1, Some(25.0));
        assert_eq!(s.idfull, Some(30.0));
    }

    #[test]
    fn post_gate_trade_excluded_from_eod() {
        let txs = vec![
            tx("A", Side::Buy, 100.0, 1.0, 30),
            tx("B", Side::Buy, 200.0, 1.0, 2),
        ];
        let s = eod_stats(&txs, &product());
        assert_eq!(s.idfull, Some(100.0));
        assert_eq!(s.high, Some(100.0));
    }

    #[test]
    fn book_matches_direct_computation() {
        let txs = vec![
            tx("B", Side::Sell, 110.0, 6.0, 90),
            tx("A", Side::Buy, 100.0, 2.0, 120),
            tx("C", Side::Buy, 90.0, 1.0, 90),
        ];
        let book = ProductBook::from_raw(&txs, product());
        for m in [200, 120, 100, 90, 5] {
            let tau = product().delivery_start() - Duration::minutes(m);
            assert_eq!(book.live_stats(tau), live_stats(&txs, &product(), tau));
        }
    }
}
