//! Seeded generator of transaction feeds, auction curves and covariates with a
//! known data-generating process.
//!
//! The latent fair price of a product is the day-ahead price plus a linear
//! combination of features the pipeline builds itself, plus Gaussian noise.
//! Trades arrive with an intensity that ramps up toward gate closure and are
//! priced at the fair price plus a product-level information error that fades
//! toward the gate and per-trade microstructure noise.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Availability, CovariateStore};
use crate::market_data::{write_transactions, ProductKey, SelfTrade, Side, Transaction};
use crate::merit_order::{write_curves, AuctionCurve, CurveBook, CurveKind, CurvePair};

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed derived from a base seed and a path of labels.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceConfig {
    pub level: f64,
    /// Peak-to-trough amplitude of the intraday price profile.
    pub daily_amplitude: f64,
    pub weekend_discount: f64,
    /// AR(1) coefficient of the daily price level.
    pub ar_coef: f64,
    pub ar_sd: f64,
    /// Probability of a price jump per product.
    pub jump_intensity: f64,
    pub jump_size: f64,
    /// EUR/MWh per MW of residual load above 30 GW.
    pub residual_load_coef: f64,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            level: 90.0,
            daily_amplitude: 20.0,
            weekend_discount: 10.0,
            ar_coef: 0.8,
            ar_sd: 6.0,
            jump_intensity: 0.005,
            jump_size: 30.0,
            residual_load_coef: 0.0015,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradingConfig {
    /// Expected number of trades per product.
    pub trades_per_product: f64,
    /// Decay (hours) of the arrival ramp before gate closure.
    pub ramp_hours: f64,
    /// Share of trades arriving uniformly over the trading window.
    pub base_share: f64,
    pub volume_log_mean: f64,
    pub volume_log_sd: f64,
    /// Std of the product-level price error, fully present at market open and gone at the gate.
    pub info_noise_sd: f64,
    pub micro_noise_sd: f64,
    pub self_trade_share: f64,
    pub unknown_flag_share: f64,
    /// Share of trades reported twice (once per side) under the same id.
    pub duplicate_share: f64,
}

impl Default for TradingConfig {
    fn default() -> Self {
        Self {
            trades_per_product: 60.0,
            ramp_hours: 2.0,
            base_share: 0.2,
            volume_log_mean: 1.0,
            volume_log_sd: 0.8,
            info_noise_sd: 6.0,
            micro_noise_sd: 1.5,
            self_trade_share: 0.02,
            unknown_flag_share: 0.05,
            duplicate_share: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateConfig {
    /// Number of decoys collinear with the driver `X_drv`.
    pub decoys: usize,
    /// Pairwise correlation within the driver/decoy block.
    pub decoy_corr: f64,
    /// Independent standard-normal series without effect.
    pub noise_series: usize,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        Self {
            decoys: 4,
            decoy_corr: 0.95,
            noise_series: 6,
        }
    }
}

/// One term of the fair-price equation: `weight * feature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    /// A covariate name, `dh_<covariate>` or `shift_E_sol | shift_E_wind | shift_E_ren`.
    pub feature: String,
    pub weight: f64,
}

fn default_effects() -> Vec<Effect> {
    vec![
        Effect { feature: "X_drv".into(), weight: 4.0 },
        Effect { feature: "shift_E_ren".into(), weight: -0.003 },
        Effect { feature: "dh_E_cons".into(), weight: 0.002 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: usize,
    pub price: PriceConfig,
    pub trading: TradingConfig,
    pub covariates: CovariateConfig,
    pub effects: Vec<Effect>,
    /// Std of the fair-price noise.
    pub noise_sd: f64,
    /// Generate auction curves; otherwise `P_da`/`V_da` are written as covariates.
    pub curves: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            days: 60,
            price: PriceConfig::default(),
            trading: TradingConfig::default(),
            covariates: CovariateConfig::default(),
            effects: default_effects(),
            noise_sd: 3.0,
            curves: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.trading;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.days == 0 {
            return bad("days must be positive");
        }
        if !(t.trades_per_product > 0.0) || !(t.ramp_hours > 0.0) {
            return bad("trade intensity and ramp must be positive");
        }
        if !(-1.0 < self.price.ar_coef && self.price.ar_coef < 1.0) {
            return bad("AR coefficient must lie in (-1, 1)");
        }
        if !(0.0..=1.0).contains(&t.base_share) || !(0.0..=1.0).contains(&self.price.jump_intensity) {
            return bad("shares and probabilities must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.covariates.decoy_corr) {
            return bad("decoy correlation must lie in [0, 1)");
        }
        let sds = [
            self.noise_sd,
            t.info_noise_sd,
            t.micro_noise_sd,
            t.volume_log_sd,
            self.price.ar_sd,
        ];
        if sds.iter().any(|s| !(*s >= 0.0)) {
            return bad("standard deviations must be non-negative");
        }
        for e in &self.effects {
            EffectFeature::parse(&e.feature)?;
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.days as i64 - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EffectFeature {
    Plain(String),
    HourDiff(String),
    Shift(Vec<&'static str>),
}

impl EffectFeature {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "shift_E_sol" => Self::Shift(vec!["E_sol"]),
            "shift_E_wind" => Self::Shift(vec!["E_won", "E_woff"]),
            "shift_E_ren" => Self::Shift(vec!["E_sol", "E_won", "E_woff"]),
            _ if s.starts_with("shift_") => {
                return Err(Error::Config(format!("unsupported effect feature `{s}`")));
            }
            _ => match s.strip_prefix("dh_") {
                Some(c) => Self::HourDiff(c.to_string()),
                None => Self::Plain(s.to_string()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTruth {
    pub date: NaiveDate,
    pub hour: u8,
    pub p_da: f64,
    pub v_da: f64,
    /// Sum of the configured effects.
    pub effect: f64,
    pub fair_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    pub products: Vec<ProductTruth>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub transactions: Vec<Transaction>,
    pub curves: CurveBook,
    pub covariates: CovariateStore,
    pub truth: Truth,
}

/// Products with their own delivery interval (the spring surrogate hour is skipped).
fn real_products(start: NaiveDate, end: NaiveDate) -> Vec<ProductKey> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .flat_map(ProductKey::hours_of)
        .filter(|k| ProductKey::from_delivery_start(k.delivery_start()) == Some(*k))
        .collect()
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Hourly covariate paths with day-ahead and, where applicable, intraday values.
struct CovariatePaths {
    store: CovariateStore,
}

impl CovariatePaths {
    fn generate(cfg: &SynthConfig, keys: &[ProductKey]) -> Self {
        let mut store = CovariateStore::new();
        let stream = |id: u64| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, id]));
        let da = Availability::DayAhead;
        let id = Availability::Intraday;

        // Load: daily AR level, intraday profile, weekend dip.
        let mut rng = stream(1);
        let mut level = 0.0;
        let mut last_day = None;
        for k in keys {
            if last_day != Some(k.delivery_day) {
                level = 0.7 * level + 2000.0 * normal(&mut rng);
                last_day = Some(k.delivery_day);
            }
            let h = k.delivery_hour as f64;
            let shape = 0.5 * (1.0 - (2.0 * PI * (h - 4.0) / 24.0).cos());
            let weekend = if is_weekend(k.delivery_day) { 7000.0 } else { 0.0 };
            let v = 48000.0 + 14000.0 * shape - weekend + level + 500.0 * normal(&mut rng);
            store.insert("E_cons", da, k.delivery_day, k.delivery_hour, v.round());
        }

        // Solar: daily cloudiness times a daylight profile; intraday revision scales with output.
        let mut rng = stream(2);
        let mut cloud = 1.0;
        let mut last_day = None;
        for k in keys {
            if last_day != Some(k.delivery_day) {
                cloud = rng.random_range(0.3..1.0);
                last_day = Some(k.delivery_day);
            }
            let h = k.delivery_hour as f64;
            let profile = (PI * (h - 6.0) / 14.0).sin().max(0.0);
            let fc = 30000.0 * profile * cloud;
            let rev = (fc + 2500.0 * profile * normal(&mut rng)).max(0.0);
            store.insert("E_sol", da, k.delivery_day, k.delivery_hour, fc.round());
            store.insert("E_sol", id, k.delivery_day, k.delivery_hour, rev.round());
        }

        // Wind: hourly AR(1) around a mean, clamped at zero.
        for (sid, name, mean, sd, rev_sd) in [(3, "E_won", 12000.0, 5000.0, 1200.0), (4, "E_woff", 3500.0, 1500.0, 400.0)] {
            let mut rng = stream(sid);
            let phi: f64 = 0.95;
            let mut x = 0.0;
            for k in keys {
                x = phi * x + (1.0 - phi * phi).sqrt() * normal(&mut rng);
                let fc = (mean + sd * x).max(0.0);
                let rev = (fc + rev_sd * normal(&mut rng)).max(0.0);
                store.insert(name, da, k.delivery_day, k.delivery_hour, fc.round());
                store.insert(name, id, k.delivery_day, k.delivery_hour, rev.round());
            }
        }

        // Driver plus collinear decoys sharing one common factor.
        let mut rng = stream(5);
        let rho = cfg.covariates.decoy_corr;
        for k in keys {
            let common = normal(&mut rng);
            for j in 0..=cfg.covariates.decoys {
                let v = rho.sqrt() * common + (1.0 - rho).sqrt() * normal(&mut rng);
                let name = if j == 0 { "X_drv".to_string() } else { format!("X_dec{j}") };
                store.insert(&name, da, k.delivery_day, k.delivery_hour, v);
            }
        }

        let mut rng = stream(6);
        for k in keys {
            for j in 1..=cfg.covariates.noise_series {
                store.insert(&format!("N_{j}"), da, k.delivery_day, k.delivery_hour, normal(&mut rng));
            }
        }

        // Daily market state: a random-walk fuel price.
        let mut rng = stream(7);
        let mut gas = 80.0;
        let mut day = keys.first().map(|k| k.delivery_day);
        while let Some(d) = day {
            if d > keys.last().map(|k| k.delivery_day).unwrap_or(d) {
                break;
            }
            gas += 1.5 * normal(&mut rng);
            store.insert("M_gas", Availability::MarketState, d, 0, (gas * 100.0).round() / 100.0);
            day = d.succ_opt();
        }
        Self { store }
    }

    /// Latest known value at delivery: intraday when available.
    fn final_value(&self, name: &str, key: &ProductKey) -> Option<f64> {
        self.store
            .raw(name, Availability::Intraday, key.delivery_day, key.delivery_hour)
            .or_else(|| self.store.raw(name, Availability::DayAhead, key.delivery_day, key.delivery_hour))
            .or_else(|| self.store.raw(name, Availability::Static, key.delivery_day, key.delivery_hour))
    }

    fn effect_value(&self, f: &EffectFeature, key: &ProductKey) -> Option<f64> {
        match f {
            EffectFeature::Plain(n) => self.final_value(n, key),
            EffectFeature::HourDiff(n) => {
                let prev = key.previous_hour();
                let prev = if ProductKey::from_delivery_start(prev.delivery_start()) == Some(prev) {
                    prev
                } else {
                    prev.previous_hour()
                };
                Some(self.final_value(n, key)? - self.final_value(n, &prev)?)
            }
            EffectFeature::Shift(names) => names
                .iter()
                .map(|n| {
                    let d = key.delivery_day;
                    let h = key.delivery_hour;
                    Some(
                        self.store.raw(n, Availability::Intraday, d, h)?
                            - self.store.raw(n, Availability::DayAhead, d, h)?,
                    )
                })
                .sum(),
        }
    }
}

/// Supply and demand curves clearing exactly at `(volume, price)`.
fn auction_curves(rng: &mut ChaCha8Rng, volume: f64, price: f64, residual_load: f64) -> Result<CurvePair> {
    const FLOOR: f64 = -500.0;
    const CAP: f64 = 3000.0;
    let slope = 0.004 * (1.0 + (residual_load / 40000.0).max(0.0)) * rng.random_range(0.8..1.25);
    let convexity = 2e-7 * rng.random_range(0.5..1.5);
    let offsets = [-15000.0, -8000.0, -4000.0, -2000.0, -1000.0, 0.0, 1000.0, 2000.0, 4000.0, 8000.0, 15000.0];
    let mut supply = vec![(volume - 20000.0, FLOOR)];
    for dv in offsets {
        let p = (price + slope * dv + convexity * dv * dv.abs()).clamp(FLOOR, CAP);
        supply.push((volume + dv, p));
    }
    supply.push((volume + 20000.0, CAP));
    supply.dedup_by(|b, a| a.1 == b.1 && a.0 == b.0);
    let elasticity = rng.random_range(1.0..4.0);
    let demand = vec![
        (volume - elasticity * (CAP - price), CAP),
        (volume, price),
        (volume + elasticity * (price - FLOOR), FLOOR),
    ];
    Ok(CurvePair {
        supply: AuctionCurve::new(CurveKind::Supply, supply)?,
        demand: AuctionCurve::new(CurveKind::Demand, demand)?,
    })
}

fn product_trades(cfg: &TradingConfig, key: &ProductKey, fair: f64, seed: u64, next_id: &mut u64) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let open = key.market_open();
    let gate = key.gate_closure();
    let window_ms = (gate - open).num_milliseconds() as f64;
    let window_h = window_ms / 3.6e6;
    let count = Poisson::new(cfg.trades_per_product).expect("positive intensity").sample(&mut rng) as usize;
    let tail = 1.0 - (-window_h / cfg.ramp_hours).exp();
    let volume = LogNormal::new(cfg.volume_log_mean, cfg.volume_log_sd.max(1e-12)).expect("valid lognormal");
    let info = cfg.info_noise_sd * normal(&mut rng);
    let mut out = Vec::with_capacity(count + count / 4);
    for _ in 0..count {
        let before_gate_h = if rng.random::<f64>() < cfg.base_share {
            rng.random::<f64>() * window_h
        } else {
            -cfg.ramp_hours * (1.0 - rng.random::<f64>() * tail).ln()
        };
        let ms = (before_gate_h * 3.6e6).round().clamp(0.0, window_ms) as i64;
        let t = gate - Duration::milliseconds(ms);
        let fade = ms as f64 / window_ms;
        let price = fair + info * fade + cfg.micro_noise_sd * normal(&mut rng);
        let vol = ((volume.sample(&mut rng) * 10.0).round() / 10.0).max(0.1);
        let u: f64 = rng.random();
        let self_trade = if u < cfg.self_trade_share {
            SelfTrade::Yes
        } else if u < cfg.self_trade_share + cfg.unknown_flag_share {
            SelfTrade::Unknown
        } else {
            SelfTrade::No
        };
        let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
        *next_id += 1;
        let tx = Transaction {
            trade_id: format!("T{:09}", *next_id),
            side,
            price: (price * 100.0).round() / 100.0,
            volume: vol,
            execution_time: t,
            delivery_start: key.delivery_start(),
            delivery_end: key.delivery_end(),
            self_trade,
            market_area: "DE".into(),
            product: "XBID_Hour_Power".into(),
        };
        if rng.random::<f64>() < cfg.duplicate_share {
            let mut twin = tx.clone();
            twin.side = match side {
                Side::Buy => Side::Sell,
                Side::Sell => Side::Buy,
            };
            out.push(tx);
            out.push(twin);
        } else {
            out.push(tx);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    // One extra day in front so that the first day has previous-hour and previous-day neighbours.
    let first = cfg.start - Duration::days(1);
    let keys = real_products(first, cfg.end());
    let paths = CovariatePaths::generate(cfg, &keys);
    let effects: Vec<(EffectFeature, f64)> = cfg
        .effects
        .iter()
        .map(|e| Ok((EffectFeature::parse(&e.feature)?, e.weight)))
        .collect::<Result<_>>()?;

    let mut price_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
    let mut ar = 0.0;
    let mut last_day = None;
    let mut covariates = paths.store.clone();
    let mut curves = CurveBook::new();
    let mut products = Vec::with_capacity(keys.len());
    let mut transactions = Vec::new();
    let mut next_id = 0u64;
    let pc = &cfg.price;
    for key in &keys {
        let (d, h) = (key.delivery_day, key.delivery_hour);
        if last_day != Some(d) {
            ar = pc.ar_coef * ar + pc.ar_sd * (1.0 - pc.ar_coef * pc.ar_coef).sqrt() * normal(&mut price_rng);
            last_day = Some(d);
        }
        let raw_da = |n: &str| paths.store.raw(n, Availability::DayAhead, d, h).unwrap_or(0.0);
        let load = raw_da("E_cons");
        let residual = load - raw_da("E_sol") - raw_da("E_won") - raw_da("E_woff");
        let hf = h as f64;
        let shape = 0.5 * (1.0 - (2.0 * PI * (hf - 3.0) / 24.0).cos());
        let weekend = if is_weekend(d) { pc.weekend_discount } else { 0.0 };
        let jump = if price_rng.random::<f64>() < pc.jump_intensity {
            pc.jump_size * Exp::new(1.0).expect("rate 1").sample(&mut price_rng)
        } else {
            0.0
        };
        let p_da = ((pc.level + pc.daily_amplitude * shape - weekend + ar + pc.residual_load_coef * (residual - 30000.0) + jump)
            * 100.0)
            .round()
            / 100.0;
        let v_da = ((0.3 * load + 300.0 * normal(&mut price_rng)).max(1000.0) * 10.0).round() / 10.0;
        let effect: f64 = effects
            .iter()
            .map(|(f, w)| w * paths.effect_value(f, key).unwrap_or(0.0))
            .sum();
        let fair = p_da + effect + cfg.noise_sd * normal(&mut price_rng);

        if cfg.curves {
            let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[3, key_id(key)]));
            curves.insert((d, h), auction_curves(&mut crng, v_da, p_da, residual)?);
        } else {
            covariates.insert("P_da", Availability::DayAhead, d, h, p_da);
            covariates.insert("V_da", Availability::DayAhead, d, h, v_da);
        }
        let seed = derive_seed(cfg.seed, &[4, key_id(key)]);
        transactions.extend(product_trades(&cfg.trading, key, fair, seed, &mut next_id));
        products.push(ProductTruth {
            date: d,
            hour: h,
            p_da,
            v_da,
            effect,
            fair_price: fair,
        });
    }
    transactions.sort_by(|a, b| (a.execution_time, &a.trade_id).cmp(&(b.execution_time, &b.trade_id)));
    Ok(SynthData {
        transactions,
        curves,
        covariates,
        truth: Truth {
            config: cfg.clone(),
            products,
        },
    })
}

fn key_id(key: &ProductKey) -> u64 {
    key.delivery_day.num_days_from_ce() as u64 * 24 + key.delivery_hour as u64
}

impl SynthData {
    /// Writes `transactions.csv`, `curves.csv` (when curves were generated),
    /// `covariates.csv` and `truth.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_transactions(BufWriter::new(File::create(dir.join("transactions.csv"))?), &self.transactions)?;
        if !self.curves.is_empty() {
            write_curves(BufWriter::new(File::create(dir.join("curves.csv"))?), &self.curves)?;
        }
        self.covariates
            .write_csv(BufWriter::new(File::create(dir.join("covariates.csv"))?))?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("truth.json"))?), &self.truth)?;
        Ok(())
    }

    pub fn fair_price(&self, day: NaiveDate, hour: u8) -> Option<f64> {
        self.truth
            .products
            .iter()
            .find(|p| p.date == day && p.hour == hour)
            .map(|p| p.fair_price)
    }
}
