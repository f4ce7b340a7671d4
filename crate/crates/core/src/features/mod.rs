//! Feature rows, lag differences and the standardised design matrix.

mod context;
mod covariates;
mod design;

pub use context::{
    apply_lags, default_hour_groups, CidAnchor, FeatureConfig, FeatureContext, FeatureRow, HourGroup,
    AUCTION_PUBLICATION_HOUR,
};
pub use covariates::{Availability, CovariateStore, DAY_AHEAD_PUBLICATION_HOUR, INTRADAY_PUBLICATION_HOUR};
pub use design::{
    build_design, clean_and_standardise, reclean_selected, CleanDesign, CleaningConfig, DesignMatrix,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{CreationTime, MarketBooks, ProductKey, SelfTrade, Side, Transaction};
    use crate::merit_order::CurveBook;
    use chrono::{Duration, NaiveDate};

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 9, 14).unwrap()
    }

    fn trade(id: &str, key: ProductKey, side: Side, price: f64, volume: f64, minutes_before: i64) -> Transaction {
        Transaction {
            trade_id: id.into(),
            side,
            price,
            volume,
            execution_time: key.delivery_start() - Duration::minutes(minutes_before),
            delivery_start: key.delivery_start(),
            delivery_end: key.delivery_end(),
            self_trade: SelfTrade::No,
            market_area: String::new(),
            product: String::new(),
        }
    }

    fn context(txs: &[Transaction], cov: CovariateStore) -> FeatureContext {
        FeatureContext::new(
            MarketBooks::from_transactions(txs),
            &CurveBook::new(),
            cov,
            FeatureConfig::default(),
        )
    }

    #[test]
    fn table_three_arithmetic() {
        let d = day();
        let mut cov = CovariateStore::new();
        for (n, v) in [("E_tot", 50.0), ("E_sol", 10.0), ("E_won", 15.0), ("E_woff", 5.0), ("E_cons", 70.0)] {
            cov.insert(n, Availability::DayAhead, d, 12, v);
        }
        let key = ProductKey::new(d, 12).unwrap();
        let txs = vec![
            trade("a", key, Side::Buy, 90.0, 8.0, 120),
            trade("b", key, Side::Sell, 95.0, 12.0, 100),
        ];
        let ctx = context(&txs, cov);
        let tau = CreationTime::before_hour(d, 12, 1.0);
        let row = ctx.assemble_row(d, 12, &tau);
        assert_eq!(row.get("E_res"), Some(20.0));
        assert_eq!(row.get("C_res"), Some(40.0));
        assert_eq!(row.get("E_res_minus_V_cid"), Some(10.0));
        assert_eq!(row.get("V_cid"), Some(10.0));
        assert_eq!(row.get("T_deliv"), Some(1.0));
        assert_eq!(row.get("P_idfull"), Some(93.0));
        // No day-ahead price source, so no spread feature.
        assert!(!row.names.iter().any(|n| n == "P_idfull_minus_P_da"));
    }

    #[test]
    fn time_to_delivery_in_fractional_hours() {
        let ctx = context(&[], CovariateStore::new());
        let tau = CreationTime::before_hour(day(), 10, 3.5);
        assert_eq!(ctx.assemble_row(day(), 10, &tau).get("T_deliv"), Some(3.5));
    }

    #[test]
    fn hour_lag_uses_same_creation_time() {
        let d = day();
        let mut cov = CovariateStore::new();
        cov.insert("E_cons", Availability::Static, d, 7, 5.0);
        cov.insert("E_cons", Availability::Static, d, 6, 3.0);
        cov.insert("E_cons", Availability::Static, d - Duration::days(1), 7, 5.0);
        let ctx = context(&[], cov);
        let tau = CreationTime::before_hour(d, 7, 2.0);
        let names = ctx.feature_names();
        let row = ctx.full_row(d, 7, &tau);
        let at = |n: &str| row[names.iter().position(|x| x == n).unwrap()];
        assert_eq!(at("dh_E_cons"), Some(2.0));
        assert_eq!(at("dd_E_cons"), Some(0.0));
        assert_eq!(at("dh_T_deliv"), Some(1.0));
    }

    #[test]
    fn day_lag_of_live_index_uses_shifted_tau() {
        let d = day();
        let today = ProductKey::new(d, 9).unwrap();
        let yesterday = today.shift_days(-1);
        let txs = vec![
            trade("t1", today, Side::Buy, 100.0, 1.0, 200),
            trade("t2", today, Side::Buy, 200.0, 1.0, 30),
            trade("y1", yesterday, Side::Buy, 60.0, 1.0, 200),
            trade("y2", yesterday, Side::Buy, 300.0, 1.0, 30),
        ];
        let ctx = context(&txs, CovariateStore::new());
        let tau = CreationTime::before_hour(d, 9, 1.0);
        let names = ctx.feature_names();
        let row = ctx.full_row(d, 9, &tau);
        let at = |n: &str| row[names.iter().position(|x| x == n).unwrap()];
        let live_today = crate::market_data::live_stats(
            ctx.books.get(&today).unwrap().trades(),
            &today,
            tau.to_utc(),
        );
        let live_yesterday = crate::market_data::live_stats(
            ctx.books.get(&yesterday).unwrap().trades(),
            &yesterday,
            tau.shift_days(-1).to_utc(),
        );
        assert_eq!(at("P_idfull"), live_today.idfull);
        assert_eq!(
            at("dd_P_idfull"),
            Some(live_today.idfull.unwrap() - live_yesterday.idfull.unwrap())
        );
        assert_eq!(at("dd_P_idfull"), Some(40.0));
        // Yesterday's final values are already known.
        assert_eq!(at("eod1_P_idfull"), Some(180.0));
    }

    #[test]
    fn design_shapes_and_shifted_rows() {
        let d = day();
        let ctx = context(&[], CovariateStore::new());
        let tau = CreationTime::before_hour(d, 5, 1.0);
        let x = build_design(&ctx, d, 5, tau, 1, 1).unwrap();
        assert_eq!(x.rows.len(), 2);
        assert_eq!(x.targets.len(), 1);
        assert_eq!(x.days, vec![d - Duration::days(1), d]);
        assert!(matches!(build_design(&ctx, d, 5, tau, 10, 30), Err(crate::Error::InsufficientHistory(_))));
    }

    #[test]
    fn autumn_day_has_24_keys_and_drops_second_hour_two() {
        let d = NaiveDate::from_ymd_opt(2022, 10, 30).unwrap();
        let first = ProductKey::new(d, 2).unwrap();
        let mut second = trade("late", first, Side::Buy, 999.0, 1.0, 10);
        second.delivery_start += Duration::hours(1);
        second.delivery_end += Duration::hours(1);
        second.execution_time += Duration::hours(1);
        let txs = vec![trade("early", first, Side::Buy, 50.0, 1.0, 60), second];
        let ctx = context(&txs, CovariateStore::new());
        assert_eq!(ctx.eod_idfull(d, 2), Some(50.0));
        assert_eq!(ProductKey::hours_of(d).len(), 24);
    }
}
