use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use cidcast_core::bayes::nuts::{sample, LogDensity};
use cidcast_core::bayes::{
    empirical_prior, estimate_ppd, nuts_sample, ModelSpec, NutsConfig, PredictiveMixture, SigmaWMode, DEFAULT_BETA,
};
use cidcast_core::evaluation::{crps, dm_test, empirical_coverage};
use cidcast_core::features::{clean_and_standardise, CleaningConfig, DesignMatrix};
use cidcast_core::market_data::{
    eod_stats, filter_eligible, live_stats, ProductKey, SelfTrade, Side, Transaction,
};
use cidcast_core::merit_order::{slope_at, transform, AuctionCurve, CurveKind, TransformedSupply};
use cidcast_core::predictive::{
    alpha_at_cut, hdi_at_cut, spread_probs, summarise, DensityGrid, PredictiveConfig,
};
use cidcast_core::selection::{lambda_max, lasso_path, omp_select, LassoConfig, OmpConfig};

fn key() -> ProductKey {
    ProductKey::new(NaiveDate::from_ymd_opt(2022, 6, 1).unwrap(), 14).unwrap()
}

prop_compose! {
    fn trade(k: ProductKey)(
        id in 0u32..40,
        buy in any::<bool>(),
        cents in -50_000i64..80_000,
        vol in 1u32..500,
        secs in -30_000i64..-301,
        flag in prop_oneof![4 => Just(SelfTrade::No), 1 => Just(SelfTrade::Unknown), 1 => Just(SelfTrade::Yes)],
        block in prop::bool::weighted(0.1),
    ) -> Transaction {
        let start = k.delivery_start();
        Transaction {
            trade_id: format!("T{id}"),
            side: if buy { Side::Buy } else { Side::Sell },
            price: cents as f64 / 100.0,
            volume: vol as f64 / 10.0,
            execution_time: start + Duration::seconds(secs),
            delivery_start: start,
            delivery_end: start + Duration::hours(if block { 4 } else { 1 }),
            self_trade: flag,
            market_area: "DE".into(),
            product: "Intraday_Hour_Power".into(),
        }
    }
}

fn standard_normal_matrix(seed: u64, n: usize, m: usize) -> DMatrix<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vwap_within_price_range_and_monotone_in_tau(
        txs in prop::collection::vec(trade(key()), 1..40),
        a in -30_000i64..-300,
        b in -30_000i64..-300,
    ) {
        let k = key();
        let eligible = filter_eligible(&txs, &k);
        prop_assert_eq!(filter_eligible(&eligible, &k), eligible.clone());
        let (t1, t2) = (a.min(b), a.max(b));
        let s1 = live_stats(&eligible, &k, k.delivery_start() + Duration::seconds(t1));
        let s2 = live_stats(&eligible, &k, k.delivery_start() + Duration::seconds(t2));
        prop_assert!(s1.v_buy <= s2.v_buy && s1.v_sell <= s2.v_sell);
        prop_assert!(s1.v_buy >= 0.0 && s1.v_sell >= 0.0);
        for s in [&s1, &s2] {
            match (s.low, s.idfull, s.high) {
                (Some(lo), Some(v), Some(hi)) => prop_assert!(lo - 1e-9 <= v && v <= hi + 1e-9),
                (None, None, None) => prop_assert_eq!(s.v_buy + s.v_sell, 0.0),
                other => prop_assert!(false, "partially defined statistics {:?}", other),
            }
        }
        let at_gate = live_stats(&eligible, &k, k.gate_closure());
        prop_assert_eq!(at_gate.idfull, eod_stats(&eligible, &k).idfull);
    }

    #[test]
    fn transformed_supply_slopes_are_non_negative(
        steps in prop::collection::vec((0.5f64..50.0, 0.0f64..30.0), 2..12),
        dsteps in prop::collection::vec((0.5f64..50.0, 0.0f64..30.0), 2..12),
        probe in 0.0f64..1.0,
    ) {
        let mut v = 0.0;
        let mut p = -100.0;
        let supply: Vec<(f64, f64)> = steps.iter().map(|&(dv, dp)| { v += dv; p += dp; (v, p) }).collect();
        let (mut v, mut p) = (0.0, 400.0);
        let demand: Vec<(f64, f64)> = dsteps.iter().map(|&(dv, dp)| { v += dv; p -= dp; (v, p) }).collect();
        let s = AuctionCurve::new(CurveKind::Supply, supply).unwrap();
        let d = AuctionCurve::new(CurveKind::Demand, demand).unwrap();
        if let Ok(t) = transform(&s, &d) {
            let (lo, hi) = t.volume_domain();
            if hi > lo {
                let vol = lo + probe * (hi - lo);
                prop_assert!(slope_at(&t, vol, 0.5).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn slope_unchanged_by_collinear_points(
        steps in prop::collection::vec((1.0f64..50.0, 0.0f64..30.0), 2..10),
        at in 0.0f64..1.0,
        split in 0.05f64..0.95,
        seg in 0usize..9,
    ) {
        let mut v = 0.0;
        let mut p = 0.0;
        let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        pts.extend(steps.iter().map(|&(dv, dp)| { v += dv; p += dp; (v, p) }));
        let curve = TransformedSupply::from_points(pts.clone(), v / 2.0).unwrap();
        let i = seg % (pts.len() - 1);
        let (a, b) = (pts[i], pts[i + 1]);
        let mut more = pts.clone();
        more.insert(i + 1, (a.0 + split * (b.0 - a.0), a.1 + split * (b.1 - a.1)));
        let denser = TransformedSupply::from_points(more, v / 2.0).unwrap();
        let vol = at * v;
        let s1 = slope_at(&curve, vol, 2.0).unwrap();
        let s2 = slope_at(&denser, vol, 2.0).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9 * (1.0 + s1.abs()), "{} vs {}", s1, s2);
    }

    #[test]
    fn standardisation_round_trips(
        seed in 0u64..1000,
        n in 8usize..40,
        m in 1usize..6,
        loc in -200.0f64..200.0,
        scale in 0.1f64..80.0,
    ) {
        let x = standard_normal_matrix(seed, n + 1, m);
        let y = standard_normal_matrix(seed + 1, n + 1, 1);
        let day0 = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let design = DesignMatrix {
            feature_names: Arc::new((0..m).map(|j| format!("f{j}")).collect()),
            days: (0..=n).map(|i| day0 + Duration::days(i as i64)).collect(),
            rows: (0..=n).map(|i| (0..m).map(|j| Some(3.0 * x[(i, j)] + j as f64)).collect()).collect(),
            targets: (0..=n).map(|i| (i < n).then(|| loc + scale * y[i])).collect(),
        };
        let clean = clean_and_standardise(&design, &CleaningConfig::default()).unwrap();
        for c in clean.x_train.column_iter() {
            let mean = c.mean();
            let sd = (c.map(|v| (v - mean).powi(2)).sum() / c.len() as f64).sqrt();
            prop_assert!(mean.abs() < 1e-8 && (sd - 1.0).abs() < 1e-8);
        }
        for i in 0..n {
            let raw = loc + scale * y[i];
            let back = clean.destandardise(clean.y_train[i]);
            prop_assert!((back - raw).abs() < 1e-9 * scale.max(raw.abs()));
            prop_assert!((clean.standardise_target(raw) - clean.y_train[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn omp_residual_orthogonal_and_rss_non_increasing(seed in 0u64..10_000, n_feat in 1usize..10) {
        let (n, m) = (50, 10);
        let x = standard_normal_matrix(seed, n, m);
        let y = standard_normal_matrix(seed ^ 0xabc, n, 1).column(0).clone_owned() + x.column(seed as usize % m) * 2.0;
        let res = omp_select(&x, &y, &OmpConfig { n_feat, ..OmpConfig::default() }).unwrap();
        prop_assert!(res.selected.len() <= n_feat);
        let mut seen = res.selected.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), res.selected.len());
        let mut r = y.clone();
        for (&j, &w) in res.selected.iter().zip(&res.coefficients) {
            r -= x.column(j) * w;
        }
        for &j in &res.selected {
            prop_assert!(x.column(j).dot(&r).abs() < 1e-8, "x_j'r = {}", x.column(j).dot(&r));
        }
        if let cidcast_core::selection::Diagnostics::Omp { rss, .. } = &res.diagnostics {
            prop_assert!(rss.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn omp_with_all_columns_reproduces_ols(seed in 0u64..10_000) {
        let (n, m) = (30, 6);
        let x = standard_normal_matrix(seed, n, m);
        let y = standard_normal_matrix(seed + 7, n, 1).column(0).clone_owned();
        let res = omp_select(&x, &y, &OmpConfig { n_feat: m, tol: 0.0, ..OmpConfig::default() }).unwrap();
        let w = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
        let ols = (&y - &x * w).norm_squared();
        let mut r = y.clone();
        for (&j, &c) in res.selected.iter().zip(&res.coefficients) {
            r -= x.column(j) * c;
        }
        prop_assert_eq!(res.selected.len(), m);
        prop_assert!((r.norm_squared() - ols).abs() <= 1e-8 * ols.max(1.0));
    }

    #[test]
    fn lasso_path_satisfies_kkt(seed in 0u64..10_000, frac in 0.001f64..1.2) {
        let (n, m) = (40, 8);
        let x = standard_normal_matrix(seed, n, m);
        let mut y: DVector<f64> = standard_normal_matrix(seed + 3, n, 1).column(0).clone_owned() + x.column(0);
        let ym = y.mean();
        y.add_scalar_mut(-ym);
        let lambda = frac * lambda_max(&x, &y);
        let w = &lasso_path(&x, &y, &[lambda], &LassoConfig::default())[0];
        let r = &y - &x * w;
        for j in 0..m {
            let g = x.column(j).dot(&r) / n as f64;
            let viol = if w[j] == 0.0 { (g.abs() - lambda).max(0.0) } else { (g - lambda * w[j].signum()).abs() };
            prop_assert!(viol <= 1e-6, "column {}: violation {}", j, viol);
        }
    }

    #[test]
    fn grid_and_hdi_invariants(
        comps in prop::collection::vec((-20.0f64..20.0, 0.3f64..6.0), 1..6),
        c1 in 0.01f64..0.99,
        c2 in 0.01f64..0.99,
        threshold in -30.0f64..30.0,
    ) {
        let mix = PredictiveMixture::new(comps.iter().map(|c| c.0).collect(), comps.iter().map(|c| c.1).collect()).unwrap();
        let grid = DensityGrid::from_mixture(&mix, 1000).unwrap();
        prop_assert!(grid.density().iter().all(|&d| d >= 0.0));
        prop_assert!(grid.cdf_values().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((grid.cdf_values().last().unwrap() - 1.0).abs() <= 1e-3);
        let (lo, hi) = (c1.min(c2) * grid.max_density(), c1.max(c2) * grid.max_density());
        prop_assert!(alpha_at_cut(&grid, hi) <= alpha_at_cut(&grid, lo));
        let (wide, narrow) = (hdi_at_cut(&grid, lo), hdi_at_cut(&grid, hi));
        for &(a, b) in &narrow.intervals {
            prop_assert!(wide.intervals.iter().any(|&(c, d)| c <= a + 1e-9 && b <= d + 1e-9));
        }
        let (minus, plus) = spread_probs(&mix, threshold).unwrap();
        prop_assert!((minus + plus - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn selected_interval_contains_point_and_carries_its_mass(
        comps in prop::collection::vec((-20.0f64..20.0, 0.3f64..6.0), 1..5),
    ) {
        let mix = PredictiveMixture::new(comps.iter().map(|c| c.0).collect(), comps.iter().map(|c| c.1).collect()).unwrap();
        let s = summarise(&mix, &PredictiveConfig::default()).unwrap();
        let pi = &s.interval;
        prop_assert!(pi.lower < s.point && s.point < pi.upper, "{} not inside {:?}", s.point, pi);
        let exact = mix.cdf(pi.upper) - mix.cdf(pi.lower);
        prop_assert!((pi.alpha - exact).abs() <= 1e-4, "alpha {} vs mass {}", pi.alpha, exact);
    }

    #[test]
    fn crps_non_negative_and_dm_antisymmetric(
        comps in prop::collection::vec((-20.0f64..20.0, 0.1f64..6.0), 1..8),
        y in -50.0f64..50.0,
        a in prop::collection::vec(0.0f64..5.0, 5..40),
        shift in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let mix = PredictiveMixture::new(comps.iter().map(|c| c.0).collect(), comps.iter().map(|c| c.1).collect()).unwrap();
        prop_assert!(crps(&mix, y) >= 0.0);
        prop_assert!(mix.variance() >= mix.stds().iter().map(|s| s * s).sum::<f64>() / mix.len() as f64 - 1e-12);
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, d)| x + d).collect();
        if let (Ok(ab), Ok(ba)) = (dm_test(&a, &b, 1, true), dm_test(&b, &a, 1, true)) {
            prop_assert_eq!(ab.statistic, -ba.statistic);
        }
    }

    #[test]
    fn coverage_is_monotone_in_alpha(
        raw in prop::collection::vec(prop::collection::vec(any::<bool>(), 19), 1..30),
    ) {
        let grid = cidcast_core::evaluation::default_alpha_grid();
        // Hits nested in alpha, as produced by nested HDIs.
        let hits: Vec<Vec<bool>> = raw
            .iter()
            .map(|r| {
                let first = r.iter().position(|&b| b).unwrap_or(r.len());
                (0..r.len()).map(|k| k >= first).collect()
            })
            .collect();
        let curve = empirical_coverage(&hits, &grid).unwrap();
        prop_assert!(curve.coverage.windows(2).all(|w| w[1] >= w[0]));
    }
}

struct Gauss {
    offset: f64,
}

impl LogDensity for Gauss {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] = -theta[0];
        grad[1] = -4.0 * (theta[1] - 1.0);
        self.offset - 0.5 * theta[0].powi(2) - 2.0 * (theta[1] - 1.0).powi(2)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn additive_constant_does_not_change_draws(offset in -1e3f64..1e3, seed in 0u64..1000) {
        let cfg = NutsConfig { burn_in: 100, ..NutsConfig::default() };
        let a = sample(&Gauss { offset: 0.0 }, &[0.0, 0.0], 200, &cfg, seed).unwrap();
        let b = sample(&Gauss { offset }, &[0.0, 0.0], 200, &cfg, seed).unwrap();
        // The offset perturbs log p by rounding only, so trajectories agree up to rounding.
        let worst = a.draws.iter().flatten().zip(b.draws.iter().flatten()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-4, "largest draw difference {}", worst);
        prop_assert_eq!(a.stats.n_divergent, b.stats.n_divergent);
    }

    #[test]
    fn sigma_draws_positive_and_finite(seed in 0u64..1000) {
        let x = standard_normal_matrix(seed, 40, 3);
        let y = &x * DVector::from_vec(vec![0.5, -1.0, 0.0]) + standard_normal_matrix(seed + 1, 40, 1).column(0);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        let s = nuts_sample(&spec, 300, &NutsConfig { burn_in: 150, ..NutsConfig::default() }, seed).unwrap();
        for i in 0..300 {
            prop_assert!(s.sigma(i) > 0.0 && s.sigma(i).is_finite());
            prop_assert!(s.weights(i).iter().all(|w| w.is_finite()));
        }
        let mix = estimate_ppd(&s, &[0.1, 0.2, -0.3]).unwrap();
        prop_assert!(mix.stds().iter().all(|&v| v > 0.0));
    }
}

#[test]
fn posterior_contracts_with_more_data() {
    let mut previous = [f64::INFINITY; 3];
    for (k, n) in [50usize, 200, 800].into_iter().enumerate() {
        let x = standard_normal_matrix(90 + k as u64, n, 3);
        let y = &x * DVector::from_vec(vec![0.8, -0.5, 0.3]) + standard_normal_matrix(190 + k as u64, n, 1).column(0);
        let (prior, _) = empirical_prior(&x, &y, DEFAULT_BETA, SigmaWMode::Variance).unwrap();
        let spec = ModelSpec::new(&x, &y, prior).unwrap();
        let s = nuts_sample(&spec, 2000, &NutsConfig::default(), 5).unwrap();
        for (j, prev) in previous.iter_mut().enumerate() {
            let col = s.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            // Posterior sd scales like 1/sqrt(n): a fourfold increase roughly halves it.
            assert!(sd < 0.8 * *prev, "n={n}, w{j}: sd {sd} vs {prev}");
            *prev = sd;
        }
    }
}
