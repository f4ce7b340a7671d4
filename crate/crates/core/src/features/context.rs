use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::covariates::{Availability, CovariateStore};
use crate::market_data::{localise, CreationTime, LiveStats, MarketBooks, ProductKey};
use crate::merit_order::{slope_at, transform, CurveBook, TransformedSupply, SLOPE_DELTAS};

/// Local hour on d-1 from which the day-ahead auction results for day d are known.
pub const AUCTION_PUBLICATION_HOUR: i64 = 13;

/// Price anchor at which the live merit-order slope is read off the transformed curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CidAnchor {
    Idfull,
    Id1,
}

/// A named group of delivery hours whose day-ahead prices are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourGroup {
    pub name: String,
    pub hours: Vec<u8>,
}

fn group(name: &str, hours: impl IntoIterator<Item = u8>) -> HourGroup {
    HourGroup {
        name: name.to_string(),
        hours: hours.into_iter().collect(),
    }
}

/// Default day-ahead hour groups. These follow the usual exchange block
/// names but are not an authoritative reproduction of the exchange's definitions.
pub fn default_hour_groups() -> Vec<HourGroup> {
    vec![
        group("middle_night", 0..4),
        group("early_morning", 4..8),
        group("morning", 6..10),
        group("late_morning", 8..12),
        group("high_noon", 10..14),
        group("early_afternoon", 12..16),
        group("afternoon", 14..18),
        group("rush_hour", 16..20),
        group("evening", 18..24),
        group("night", 0..6),
        group("off_peak", (0..8).chain(20..24)),
        group("sun_peak", 10..16),
        group("peakload", 8..20),
        group("baseload", 0..24),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub slope_deltas: Vec<f64>,
    pub cid_anchor: CidAnchor,
    pub hour_groups: Vec<HourGroup>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            slope_deltas: SLOPE_DELTAS.to_vec(),
            cid_anchor: CidAnchor::Idfull,
            hour_groups: default_hour_groups(),
        }
    }
}

const LIVE_NAMES: [&str; 9] = [
    "P_id1", "P_id3", "P_idfull", "P_high", "P_low", "P_last", "P_deviat", "V_buy", "V_sell",
];

/// One base (unlagged) feature.
#[derive(Debug, Clone, PartialEq)]
enum Base {
    Pda,
    Vda,
    EtaDa(usize),
    DaGroup(usize),
    DaMax,
    DaMin,
    DaVwa,
    Live(usize),
    Eod(usize),
    EtaCid(usize),
    Cov(String),
    S15(String),
    Vcid,
    SpreadIdDa,
    VcidMinusVda,
    EtaSpread(usize),
    Eres,
    Cres,
    /// `(E_tot | E_res | E_cons | C_res) - (V_da | V_cid)`.
    Excess(Energy, Volume),
    ShiftSol,
    ShiftWind,
    ShiftRen,
    Th,
    Twd,
    Tm,
    Ty,
    Twc,
    Tdeliv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Energy {
    Tot,
    Res,
    Cons,
    CRes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Volume {
    Da,
    Cid,
}

fn delta_label(d: f64) -> String {
    format!("{}", d.round() as i64)
}

impl Base {
    fn name(&self, cfg: &FeatureConfig) -> String {
        match self {
            Base::Pda => "P_da".into(),
            Base::Vda => "V_da".into(),
            Base::EtaDa(i) => format!("eta_da_{}", delta_label(cfg.slope_deltas[*i])),
            Base::DaGroup(i) => format!("P_da_{}", cfg.hour_groups[*i].name),
            Base::DaMax => "P_da_max".into(),
            Base::DaMin => "P_da_min".into(),
            Base::DaVwa => "P_da_vwa".into(),
            Base::Live(i) => LIVE_NAMES[*i].into(),
            Base::Eod(i) => format!("eod1_{}", LIVE_NAMES[*i]),
            Base::EtaCid(i) => format!("eta_cid_{}", delta_label(cfg.slope_deltas[*i])),
            Base::Cov(n) => n.clone(),
            Base::S15(n) => format!("s15_{n}"),
            Base::Vcid => "V_cid".into(),
            Base::SpreadIdDa => "P_idfull_minus_P_da".into(),
            Base::VcidMinusVda => "V_cid_minus_V_da".into(),
            Base::EtaSpread(i) => format!("eta_spread_{}", delta_label(cfg.slope_deltas[*i])),
            Base::Eres => "E_res".into(),
            Base::Cres => "C_res".into(),
            Base::Excess(e, v) => {
                let e = match e {
                    Energy::Tot => "E_tot",
                    Energy::Res => "E_res",
                    Energy::Cons => "E_cons",
                    Energy::CRes => "C_res",
                };
                let v = match v {
                    Volume::Da => "V_da",
                    Volume::Cid => "V_cid",
                };
                format!("{e}_minus_{v}")
            }
            Base::ShiftSol => "shift_E_sol".into(),
            Base::ShiftWind => "shift_E_wind".into(),
            Base::ShiftRen => "shift_E_ren".into(),
            Base::Th => "T_h".into(),
            Base::Twd => "T_wd".into(),
            Base::Tm => "T_m".into(),
            Base::Ty => "T_y".into(),
            Base::Twc => "T_wc".into(),
            Base::Tdeliv => "T_deliv".into(),
        }
    }
}

/// Day-ahead auction outcome of one delivery hour.
#[derive(Debug, Clone)]
struct DaInfo {
    price: Option<f64>,
    volume: Option<f64>,
    curve: Option<TransformedSupply>,
    eta: Vec<Option<f64>>,
}

/// On the spring transition day hour 2 stands in for hour 3.
fn spring_surrogate(day: NaiveDate, hour: u8) -> Option<u8> {
    if hour != 2 {
        return None;
    }
    let h2 = ProductKey { delivery_day: day, delivery_hour: 2 };
    let h3 = ProductKey { delivery_day: day, delivery_hour: 3 };
    (h2.delivery_start() == h3.delivery_start()).then_some(3)
}

type RowKey = (NaiveDate, u8, CreationTime);

/// Everything needed to assemble feature rows, plus a row cache.
///
/// Rows are pure functions of `(day, hour, tau)` and the immutable inputs,
/// so cached rows can be shared between design matrices and threads.
pub struct FeatureContext {
    pub books: MarketBooks,
    pub covariates: CovariateStore,
    pub config: FeatureConfig,
    da: HashMap<(NaiveDate, u8), DaInfo>,
    has_curves: bool,
    schema: Vec<Base>,
    base_names: Arc<Vec<String>>,
    full_names: Arc<Vec<String>>,
    cache: RwLock<HashMap<RowKey, Arc<Vec<Option<f64>>>>>,
}

/// Feature values of one `(day, hour, tau)` with their names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub names: Arc<Vec<String>>,
    pub values: Vec<Option<f64>>,
}

impl FeatureRow {
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.values[i]
    }
}

/// Adds previous-hour and previous-day differences to a base row:
/// the result is `[x, x - x_prev_hour, x - x_prev_day]`.
pub fn apply_lags(
    base: &[Option<f64>],
    prev_hour: &[Option<f64>],
    prev_day: &[Option<f64>],
) -> Vec<Option<f64>> {
    let diff = |other: &[Option<f64>]| {
        base.iter()
            .zip(other)
            .map(|(a, b)| Some((*a)? - (*b)?))
            .collect::<Vec<_>>()
    };
    let mut out = base.to_vec();
    out.extend(diff(prev_hour));
    out.extend(diff(prev_day));
    out
}

impl FeatureContext {
    pub fn new(
        books: MarketBooks,
        curves: &CurveBook,
        covariates: CovariateStore,
        config: FeatureConfig,
    ) -> Self {
        let mut da = HashMap::new();
        for (&(day, hour), pair) in curves {
            let curve = transform(&pair.supply, &pair.demand).ok();
            let eta = config
                .slope_deltas
                .iter()
                .map(|&d| {
                    curve
                        .as_ref()
                        .and_then(|c| slope_at(c, c.reference_demand_volume, d).ok())
                })
                .collect();
            da.insert(
                (day, hour),
                DaInfo {
                    price: curve.as_ref().map(|c| c.clearing_price),
                    volume: curve.as_ref().map(|c| c.reference_demand_volume),
                    curve,
                    eta,
                },
            );
        }
        let has_curves = !curves.is_empty();
        let schema = Self::build_schema(&covariates, has_curves, &config);
        let base_names: Vec<String> = schema.iter().map(|b| b.name(&config)).collect();
        let mut full_names = base_names.clone();
        full_names.extend(base_names.iter().map(|n| format!("dh_{n}")));
        full_names.extend(base_names.iter().map(|n| format!("dd_{n}")));
        Self {
            books,
            covariates,
            config,
            da,
            has_curves,
            schema,
            base_names: Arc::new(base_names),
            full_names: Arc::new(full_names),
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn build_schema(cov: &CovariateStore, has_curves: bool, cfg: &FeatureConfig) -> Vec<Base> {
        let has = |n: &str| cov.contains(n);
        let has_price = has_curves || has("P_da");
        let has_volume = has_curves || has("V_da");
        let nd = cfg.slope_deltas.len();
        let mut s = Vec::new();
        if has_price {
            s.push(Base::Pda);
        }
        if has_volume {
            s.push(Base::Vda);
        }
        if has_curves {
            s.extend((0..nd).map(Base::EtaDa));
        }
        if has_price {
            s.extend((0..cfg.hour_groups.len()).map(Base::DaGroup));
            s.extend([Base::DaMax, Base::DaMin]);
            if has_volume {
                s.push(Base::DaVwa);
            }
        }
        s.extend((0..LIVE_NAMES.len()).map(Base::Live));
        s.extend((0..LIVE_NAMES.len()).map(Base::Eod));
        if has_curves {
            s.extend((0..nd).map(Base::EtaCid));
        }
        let consumed: HashSet<&str> = ["P_da", "V_da"].into_iter().collect();
        let names: Vec<&str> = cov.names().filter(|n| !consumed.contains(n)).collect();
        s.extend(names.iter().map(|n| Base::Cov(n.to_string())));
        for n in &names {
            if let Some(stem) = n.strip_suffix("_q1") {
                if (2..=4).all(|q| has(&format!("{stem}_q{q}"))) {
                    s.push(Base::S15(stem.to_string()));
                }
            }
        }
        s.push(Base::Vcid);
        if has_price {
            s.push(Base::SpreadIdDa);
        }
        if has_volume {
            s.push(Base::VcidMinusVda);
        }
        if has_curves {
            s.extend((0..nd).map(Base::EtaSpread));
        }
        let renewables = has("E_sol") && has("E_won") && has("E_woff");
        let excess = |s: &mut Vec<Base>, e: Energy| {
            if has_volume {
                s.push(Base::Excess(e, Volume::Da));
            }
            s.push(Base::Excess(e, Volume::Cid));
        };
        if has("E_tot") {
            excess(&mut s, Energy::Tot);
            if renewables {
                s.push(Base::Eres);
                excess(&mut s, Energy::Res);
            }
        }
        if has("E_cons") {
            excess(&mut s, Energy::Cons);
            if renewables {
                s.push(Base::Cres);
                excess(&mut s, Energy::CRes);
            }
        }
        let dual = |n: &str| cov.has_class(n, Availability::DayAhead) && cov.has_class(n, Availability::Intraday);
        if dual("E_sol") {
            s.push(Base::ShiftSol);
        }
        if dual("E_won") && dual("E_woff") {
            s.push(Base::ShiftWind);
            if dual("E_sol") {
                s.push(Base::ShiftRen);
            }
        }
        s.extend([Base::Th, Base::Twd, Base::Tm, Base::Ty, Base::Twc, Base::Tdeliv]);
        s
    }

    pub fn base_names(&self) -> Arc<Vec<String>> {
        self.base_names.clone()
    }

    /// Names of the lagged rows: base features, then `dh_*` and `dd_*` differences.
    pub fn feature_names(&self) -> Arc<Vec<String>> {
        self.full_names.clone()
    }

    pub fn has_curves(&self) -> bool {
        self.has_curves
    }

    fn da_known(&self, day: NaiveDate, tau: &CreationTime) -> bool {
        let published = localise(
            (day - Duration::days(1)).and_hms_opt(0, 0, 0).expect("midnight")
                + Duration::hours(AUCTION_PUBLICATION_HOUR),
        );
        tau.to_utc() >= published
    }

    fn da_info(&self, day: NaiveDate, hour: u8) -> Option<&DaInfo> {
        self.da
            .get(&(day, hour))
            .or_else(|| spring_surrogate(day, hour).and_then(|h| self.da.get(&(day, h))))
    }

    fn cov(&self, name: &str, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        self.covariates.value(name, day, hour, tau).or_else(|| {
            spring_surrogate(day, hour).and_then(|h| self.covariates.value(name, day, h, tau))
        })
    }

    fn cov_class(&self, name: &str, class: Availability, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        self.covariates
            .value_of_class(name, class, day, hour, tau)
            .or_else(|| {
                spring_surrogate(day, hour)
                    .and_then(|h| self.covariates.value_of_class(name, class, day, h, tau))
            })
    }

    /// Day-ahead clearing price of `(day, hour)` known at `tau`.
    pub fn da_price(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        if self.has_curves {
            if !self.da_known(day, tau) {
                return None;
            }
            self.da_info(day, hour).and_then(|i| i.price)
        } else {
            self.cov("P_da", day, hour, tau)
        }
    }

    fn da_volume(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        if self.has_curves {
            if !self.da_known(day, tau) {
                return None;
            }
            self.da_info(day, hour).and_then(|i| i.volume)
        } else {
            self.cov("V_da", day, hour, tau)
        }
    }

    /// Live statistics of `(day, hour)` at creation time `tau`.
    pub fn live(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> LiveStats {
        let key = ProductKey { delivery_day: day, delivery_hour: hour };
        self.books.live_stats(&key, tau.to_utc())
    }

    /// End-of-day IDFull of `(day, hour)` if gate closure is not after `tau`.
    pub fn eod_idfull_known(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Option<f64> {
        let key = ProductKey { delivery_day: day, delivery_hour: hour };
        (key.gate_closure() <= tau.to_utc())
            .then(|| self.books.eod_stats(&key).idfull)
            .flatten()
    }

    /// End-of-day IDFull of `(day, hour)`, regardless of creation time.
    pub fn eod_idfull(&self, day: NaiveDate, hour: u8) -> Option<f64> {
        let key = ProductKey { delivery_day: day, delivery_hour: hour };
        self.books.eod_stats(&key).idfull
    }

    /// Base features of delivery `(day, hour)` as known at `tau`.
    pub fn assemble_row(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> FeatureRow {
        FeatureRow {
            names: self.base_names.clone(),
            values: self.base_values(day, hour, tau).as_ref().clone(),
        }
    }

    fn base_values(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Arc<Vec<Option<f64>>> {
        let key = (day, hour, *tau);
        if let Some(row) = self.cache.read().expect("cache lock").get(&key) {
            return row.clone();
        }
        let row = Arc::new(self.compute_base(day, hour, tau));
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, row.clone());
        row
    }

    /// Lagged feature row `[x, Δ_h x, Δ_d x]` for `(day, hour, tau)`.
    pub fn full_row(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Vec<Option<f64>> {
        let key = ProductKey { delivery_day: day, delivery_hour: hour };
        let prev = key.previous_hour();
        let base = self.base_values(day, hour, tau);
        let ph = self.base_values(prev.delivery_day, prev.delivery_hour, tau);
        let pd = self.base_values(day - Duration::days(1), hour, &tau.shift_days(-1));
        apply_lags(&base, &ph, &pd)
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }

    fn compute_base(&self, day: NaiveDate, hour: u8, tau: &CreationTime) -> Vec<Option<f64>> {
        let cfg = &self.config;
        let product = ProductKey { delivery_day: day, delivery_hour: hour };
        let live = self.live(day, hour, tau);
        let live_vals: Vec<Option<f64>> = live.named_values().iter().map(|x| x.1).collect();
        let prev_day = ProductKey { delivery_day: day - Duration::days(1), delivery_hour: hour };
        let eod_vals: Vec<Option<f64>> = if prev_day.gate_closure() <= tau.to_utc() {
            self.books
                .eod_stats(&prev_day)
                .named_values()
                .iter()
                .map(|x| x.1)
                .collect()
        } else {
            vec![None; LIVE_NAMES.len()]
        };
        let p_da = self.da_price(day, hour, tau);
        let v_da = self.da_volume(day, hour, tau);
        let da = if self.has_curves && self.da_known(day, tau) {
            self.da_info(day, hour)
        } else {
            None
        };
        let eta_da = |i: usize| da.and_then(|d| d.eta[i]);
        let anchor = match cfg.cid_anchor {
            CidAnchor::Idfull => live.idfull,
            CidAnchor::Id1 => live.id1,
        };
        let eta_cid = |i: usize| {
            let curve = da?.curve.as_ref()?;
            let p = anchor?;
            slope_at(curve, curve.volume_at_price(p), cfg.slope_deltas[i]).ok()
        };
        let day_prices: Vec<Option<f64>> = (0..24u8).map(|h| self.da_price(day, h, tau)).collect();
        let group_mean = |hours: &[u8]| {
            let vals: Option<Vec<f64>> = hours.iter().map(|&h| day_prices[h as usize]).collect();
            vals.filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        let all_prices: Option<Vec<f64>> = day_prices.iter().copied().collect();
        let cov = |n: &str| self.cov(n, day, hour, tau);
        let v_cid = Some(0.5 * (live.v_buy + live.v_sell));
        let e_sol = cov("E_sol");
        let e_won = cov("E_won");
        let e_woff = cov("E_woff");
        let renew = (|| Some(e_sol? + e_won? + e_woff?))();
        let e_tot = cov("E_tot");
        let e_cons = cov("E_cons");
        let e_res = (|| Some(e_tot? - renew?))();
        let c_res = (|| Some(e_cons? - renew?))();
        let shift = |n: &str| {
            Some(
                self.cov_class(n, Availability::Intraday, day, hour, tau)?
                    - self.cov_class(n, Availability::DayAhead, day, hour, tau)?,
            )
        };
        let sub = |a: Option<f64>, b: Option<f64>| Some(a? - b?);

        self.schema
            .iter()
            .map(|b| match b {
                Base::Pda => p_da,
                Base::Vda => v_da,
                Base::EtaDa(i) => eta_da(*i),
                Base::DaGroup(i) => group_mean(&cfg.hour_groups[*i].hours),
                Base::DaMax => all_prices.as_ref().map(|v| v.iter().cloned().fold(f64::MIN, f64::max)),
                Base::DaMin => all_prices.as_ref().map(|v| v.iter().cloned().fold(f64::MAX, f64::min)),
                Base::DaVwa => {
                    let pv: Option<Vec<(f64, f64)>> = (0..24u8)
                        .map(|h| Some((day_prices[h as usize]?, self.da_volume(day, h, tau)?)))
                        .collect();
                    pv.and_then(|pv| {
                        let vol: f64 = pv.iter().map(|x| x.1).sum();
                        (vol > 0.0).then(|| pv.iter().map(|x| x.0 * x.1).sum::<f64>() / vol)
                    })
                }
                Base::Live(i) => live_vals[*i],
                Base::Eod(i) => eod_vals[*i],
                Base::EtaCid(i) => eta_cid(*i),
                Base::Cov(n) => cov(n),
                Base::S15(stem) => sub(cov(&format!("{stem}_q4")), cov(&format!("{stem}_q1"))).map(|d| d / 3.0),
                Base::Vcid => v_cid,
                Base::SpreadIdDa => sub(live.idfull, p_da),
                Base::VcidMinusVda => sub(v_cid, v_da),
                Base::EtaSpread(i) => sub(eta_cid(*i), eta_da(*i)),
                Base::Eres => e_res,
                Base::Cres => c_res,
                Base::Excess(e, v) => {
                    let e = match e {
                        Energy::Tot => e_tot,
                        Energy::Res => e_res,
                        Energy::Cons => e_cons,
                        Energy::CRes => c_res,
                    };
                    let v = match v {
                        Volume::Da => v_da,
                        Volume::Cid => v_cid,
                    };
                    sub(e, v)
                }
                Base::ShiftSol => shift("E_sol"),
                Base::ShiftWind => (|| Some(shift("E_won")? + shift("E_woff")?))(),
                Base::ShiftRen => (|| Some(shift("E_sol")? + shift("E_won")? + shift("E_woff")?))(),
                Base::Th => Some(hour as f64),
                Base::Twd => Some(day.weekday().num_days_from_monday() as f64),
                Base::Tm => Some(day.month() as f64),
                Base::Ty => Some(day.year() as f64),
                Base::Twc => Some(match day.weekday().num_days_from_monday() {
                    5 => 1.0,
                    6 => 2.0,
                    _ => 0.0,
                }),
                Base::Tdeliv => Some(tau.hours_to_delivery(&product)),
            })
            .collect()
    }
}
