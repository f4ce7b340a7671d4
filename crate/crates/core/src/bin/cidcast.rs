use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use cidcast_core::features::FeatureConfig;
use cidcast_core::market_data::{build_live_series, parse_transactions, MarketBooks, ProductKey};
use cidcast_core::selection::Method;
use cidcast_core::study::{self, DataRoots, SamplerSettings, ScenarioSpec, StudyConfig};
use cidcast_core::synthetic::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "cidcast", version, about = "Probabilistic forecasts of intraday electricity price indices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Live and end-of-day index series of the products of one delivery day.
    Index {
        #[arg(long, env = "CIDCAST_DATA_DIR")]
        data: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        /// Single delivery hour; all hours when omitted.
        #[arg(long)]
        hour: Option<u8>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic data set with known ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        start: Option<NaiveDate>,
    },
    /// Run a forecast scenario into a study directory (resumable).
    Forecast {
        #[arg(long, env = "CIDCAST_DATA_DIR")]
        data: PathBuf,
        #[arg(long, env = "CIDCAST_STUDY_DIR")]
        out: PathBuf,
        /// Scenario preset a..f.
        #[arg(long)]
        scenario: String,
        /// Lag in hours for the fixed-lag scenarios e and f.
        #[arg(long, default_value_t = 1)]
        lag: u32,
        /// Override the preset's selector.
        #[arg(long)]
        selector: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        /// Use the full-scale draw count (140000) unless --samples is given.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// First test day.
        #[arg(long)]
        start: NaiveDate,
        /// Number of test days.
        #[arg(long, default_value_t = 183)]
        days: usize,
        /// Comma-separated delivery hours (default: all).
        #[arg(long, value_delimiter = ',')]
        hours: Option<Vec<u8>>,
        /// Also run the leakage audit on a sample of forecasts.
        #[arg(long)]
        audit: bool,
    },
    /// Recompute score tables of a study directory.
    Score {
        study: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Diebold-Mariano tests between two study directories and the live benchmark.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn study_config(path: Option<&Path>) -> CliResult<StudyConfig> {
    Ok(match path {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    })
}

fn index(data: &Path, date: NaiveDate, hour: Option<u8>, cfg: &StudyConfig, out: &Path) -> CliResult<()> {
    let roots = DataRoots::from_dir(data).with_env_overrides();
    let books = MarketBooks::from_transactions(&parse_transactions(&roots.transactions)?.transactions);
    fs::create_dir_all(out)?;
    let keys: Vec<ProductKey> = match hour {
        Some(h) => vec![ProductKey::new(date, h)?],
        None => ProductKey::hours_of(date),
    };
    let mut eod = csv::Writer::from_path(out.join(format!("eod_{date}.csv")))?;
    eod.write_record(["hour", "id1", "id3", "idfull", "high", "low", "last", "deviat", "v_buy", "v_sell"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for key in keys {
        let Some(book) = books.get(&key) else {
            log::warn!("no eligible trades for {date} h{:02}", key.delivery_hour);
            continue;
        };
        let series = build_live_series(book, cfg.live_grid_size)?;
        let file = File::create(out.join(format!("live_{date}_{:02}.csv", key.delivery_hour)))?;
        series.write_csv(BufWriter::new(file))?;
        let e = &series.eod;
        eod.write_record([
            key.delivery_hour.to_string(),
            cell(e.id1),
            cell(e.id3),
            cell(e.idfull),
            cell(e.high),
            cell(e.low),
            cell(e.last),
            cell(e.deviat),
            e.v_buy.to_string(),
            e.v_sell.to_string(),
        ])?;
    }
    eod.flush()?;
    Ok(())
}

fn synth(out: &Path, config: Option<&Path>, seed: Option<u64>, days: Option<usize>, start: Option<NaiveDate>) -> CliResult<()> {
    let mut cfg: SynthConfig = match config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
        None => SynthConfig::default(),
    };
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.days = days.unwrap_or(cfg.days);
    cfg.start = start.unwrap_or(cfg.start);
    let data = generate(&cfg)?;
    data.write_dir(out)?;
    log::info!("wrote {} transactions for {} days to {}", data.transactions.len(), cfg.days, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn forecast(
    data: &Path,
    out: &Path,
    scenario: &str,
    lag: u32,
    selector: Option<&str>,
    mut cfg: StudyConfig,
    start: NaiveDate,
    days: usize,
    hours: Option<Vec<u8>>,
    audit: bool,
) -> CliResult<usize> {
    let mut spec = ScenarioSpec::preset(scenario, lag, start, days)?;
    if let Some(s) = selector {
        spec.selector = Method::parse(s).ok_or_else(|| format!("unknown selector `{s}`"))?;
    }
    if let Some(h) = hours {
        spec.hours = h;
    }
    spec.validate()?;
    cfg.validate()?;
    let roots = DataRoots::from_dir(data).with_env_overrides();
    let input = study::load_data(&roots, FeatureConfig::default())?;
    let report = study::run(&input.context, &spec, &cfg, out)?;
    log::info!(
        "{} forecasts: {} computed, {} resumed, {} failed",
        report.total,
        report.computed,
        report.resumed,
        report.failures.len()
    );
    if audit {
        cfg.audit_fraction = cfg.audit_fraction.max(f64::MIN_POSITIVE);
        let a = study::leakage_audit(&input.context, &input.curves, &spec, &cfg)?;
        fs::write(out.join("audit.json"), serde_json::to_string_pretty(&a)?)?;
        if !a.passed() {
            return Err(format!("leakage audit failed for {} forecasts", a.mismatches.len()).into());
        }
    }
    Ok(report.failures.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome: CliResult<usize> = match cli.command {
        Command::Index { data, date, hour, config, out } => {
            study_config(config.as_deref()).and_then(|cfg| index(&data, date, hour, &cfg, &out)).map(|_| 0)
        }
        Command::Synth { out, config, seed, days, start } => synth(&out, config.as_deref(), seed, days, start).map(|_| 0),
        Command::Forecast {
            data,
            out,
            scenario,
            lag,
            selector,
            samples,
            paper_scale,
            seed,
            config,
            start,
            days,
            hours,
            audit,
        } => study_config(config.as_deref()).and_then(|mut cfg| {
            if paper_scale {
                cfg.sampler.samples = SamplerSettings::PAPER_SAMPLES;
            }
            cfg.sampler.samples = samples.unwrap_or(cfg.sampler.samples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            forecast(&data, &out, &scenario, lag, selector.as_deref(), cfg, start, days, hours, audit)
        }),
        Command::Score { study: dir, config } => study_config(config.as_deref()).and_then(|cfg| {
            let t = study::score_dir(&dir, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&t.summary)?);
            Ok(0)
        }),
        Command::Compare { a, b, out, config } => study_config(config.as_deref()).and_then(|cfg| {
            let cells = study::compare(&a, &b, &cfg)?;
            match out {
                Some(p) => study::write_dm_csv(BufWriter::new(File::create(p)?), &cells)?,
                None => study::write_dm_csv(std::io::stdout().lock(), &cells)?,
            }
            Ok(0)
        }),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        // Exit status carries the number of failed forecasts.
        Ok(n) => ExitCode::from(n.min(255) as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
