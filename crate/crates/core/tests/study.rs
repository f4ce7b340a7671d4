use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use chrono::NaiveDate;
use tempfile::TempDir;

use cidcast_core::error::Error;
use cidcast_core::features::FeatureConfig;
use cidcast_core::market_data::CreationTime;
use cidcast_core::study::{self, DataRoots, ScenarioSpec, StudyConfig, StudyData};
use cidcast_core::synthetic::{generate, SynthConfig};

struct Fixture {
    _dir: TempDir,
    data: StudyData,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let cfg = SynthConfig {
            seed: 11,
            days: 30,
            ..SynthConfig::default()
        };
        generate(&cfg).unwrap().write_dir(dir.path()).unwrap();
        let data = study::load_data(&DataRoots::from_dir(dir.path()), FeatureConfig::default()).unwrap();
        Fixture { _dir: dir, data }
    })
}

fn quick_config() -> StudyConfig {
    let mut cfg = StudyConfig {
        history_days: 20,
        min_history: 10,
        ..StudyConfig::default()
    };
    cfg.sampler.samples = 300;
    cfg.sampler.burn_in = 100;
    cfg.selection.n_feat = 6;
    cfg
}

fn test_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 27).unwrap()
}

fn run(spec: &ScenarioSpec, cfg: &StudyConfig, dir: &Path) -> study::RunReport {
    study::run(&fixture().data.context, spec, cfg, dir).unwrap()
}

#[test]
fn fixed_lag_two_days_gives_48_forecasts_and_resumes() {
    let out = TempDir::new().unwrap();
    let spec = ScenarioSpec::preset("e", 1, test_start(), 2).unwrap();
    let cfg = quick_config();
    let first = run(&spec, &cfg, out.path());
    assert!(first.failures.is_empty(), "{:?}", first.failures);
    assert_eq!((first.total, first.computed, first.resumed), (48, 48, 0));
    let results = study::load_results(out.path(), None).unwrap();
    assert_eq!(results.len(), 48);
    for r in &results {
        assert_eq!(r.lag_hours, 1.0);
        assert!(r.pi_lower < r.pi_upper);
        assert!(r.y_true.is_some());
    }

    let csv = fs::read(out.path().join("forecasts.csv")).unwrap();
    let scores = fs::read(out.path().join("scores.csv")).unwrap();
    let second = run(&spec, &cfg, out.path());
    assert_eq!((second.computed, second.resumed), (0, 48));
    assert_eq!(fs::read(out.path().join("forecasts.csv")).unwrap(), csv);
    assert_eq!(fs::read(out.path().join("scores.csv")).unwrap(), scores);
}

#[test]
fn workers_do_not_change_results() {
    let spec = ScenarioSpec {
        hours: vec![6, 13],
        ..ScenarioSpec::preset("e", 2, test_start(), 1).unwrap()
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = quick_config();
    run(&spec, &StudyConfig { workers: 1, ..cfg.clone() }, a.path());
    run(&spec, &StudyConfig { workers: 3, ..cfg }, b.path());
    assert_eq!(
        fs::read(a.path().join("forecasts.csv")).unwrap(),
        fs::read(b.path().join("forecasts.csv")).unwrap()
    );
}

#[test]
fn existing_directory_with_other_config_is_refused() {
    let out = TempDir::new().unwrap();
    let spec = ScenarioSpec {
        hours: vec![9],
        ..ScenarioSpec::preset("e", 1, test_start(), 1).unwrap()
    };
    let cfg = quick_config();
    run(&spec, &cfg, out.path());
    let other = StudyConfig { seed: 99, ..cfg };
    let err = study::run(&fixture().data.context, &spec, &other, out.path()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn scenario_a_forecasts_all_hours_from_previous_evening() {
    let spec = ScenarioSpec::preset("a", 1, test_start(), 1).unwrap();
    let keys = spec.keys();
    assert_eq!(keys.iter().map(|k| k.1).collect::<Vec<_>>(), (0..24).collect::<Vec<u8>>());
    let day = test_start();
    for (d, h) in keys {
        assert_eq!(spec.creation_time(d, h), CreationTime::new(day, -60));
    }
    let c = ScenarioSpec::preset("c", 1, day, 1).unwrap();
    assert_eq!(c.forecast_hours(), (12..24).collect::<Vec<u8>>());
}

#[test]
fn self_comparison_is_na_and_mismatched_keys_fail() {
    let cfg = quick_config();
    let spec = ScenarioSpec {
        hours: vec![4, 10, 16, 22],
        ..ScenarioSpec::preset("e", 1, test_start(), 2).unwrap()
    };
    let out = TempDir::new().unwrap();
    run(&spec, &cfg, out.path());

    let cells = study::compare(out.path(), out.path(), &cfg).unwrap();
    assert_eq!(cells.len(), 4 * 6);
    for c in cells.iter().filter(|c| c.row != "live" && c.col != "live") {
        assert!(c.p_value.is_none() && c.statistic.is_none(), "{c:?}");
    }
    let mut buf = Vec::new();
    study::write_dm_csv(&mut buf, &cells).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("NA"));
    // The benchmark has no rest-sign forecast.
    assert!(cells
        .iter()
        .filter(|c| c.score == "rest_sign" && (c.row == "live" || c.col == "live"))
        .all(|c| c.p_value.is_none()));

    let short = TempDir::new().unwrap();
    let spec_short = ScenarioSpec { test_days: 1, ..spec };
    run(&spec_short, &cfg, short.path());
    let err = study::compare(out.path(), short.path(), &cfg).unwrap_err();
    match err {
        Error::KeyMismatch(msg) => assert!(msg.contains("2022-01-28 h04"), "{msg}"),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn leakage_audit_passes_on_all_scenarios() {
    let cfg = StudyConfig {
        audit_fraction: 0.05,
        ..quick_config()
    };
    let ctx = &fixture().data;
    for (letter, lag) in [("a", 1), ("c", 1), ("e", 1), ("e", 4)] {
        let spec = ScenarioSpec::preset(letter, lag, test_start(), 2).unwrap();
        let report = study::leakage_audit(&ctx.context, &ctx.curves, &spec, &cfg).unwrap();
        assert!(!report.checked.is_empty());
        assert!(report.passed(), "{letter}: {:?}", report.mismatches);
    }
}
