//! `eiie ingest | train | backtest | report`.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 data or I/O
//! failure, 3 numerical fault.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eiie::backtest::{benchmark_best_stock, benchmark_ubah, benchmark_ucrp, compare, run_backtest, BacktestReport};
use eiie::config::{DataSource, PreparedData, RunConfig};
use eiie::marketdata::{write_candles_csv, CandleSeries};
use eiie::training::{checkpoint_is_complete, state_path, Trainer};
use eiie::{Error, ErrorClass, Result};
use sha2::{Digest, Sha256};

const CACHE_ENV: &str = "EIIE_CACHE_DIR";

#[derive(Parser)]
#[command(name = "eiie", version, about = "Train and back-test EIIE portfolio policies")]
struct Cli {
    /// Run configuration in `key = value` form.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch or load candles for the configured ranges and report coverage.
    Ingest,
    /// Pre-train a policy on the training range.
    Train {
        /// Continue from the checkpoint in the output directory if present.
        #[arg(long)]
        resume: bool,
    },
    /// Back-test a trained policy and the benchmarks on the test range.
    Backtest {
        /// Checkpoint to load; defaults to `<output_dir>/policy.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the comparison table and training summary of a finished run.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config.set(key.trim(), value.trim())?;
    }
    if !matches!(cli.command, Command::Report) {
        config.validate()?;
    }
    match cli.command {
        Command::Ingest => ingest(&config),
        Command::Train { resume } => train(&config, resume),
        Command::Backtest { checkpoint } => backtest(&config, checkpoint),
        Command::Report => report(&config),
    }
}

fn cache_dir(config: &RunConfig) -> PathBuf {
    std::env::var_os(CACHE_ENV).map_or_else(|| config.output_dir.join("cache"), PathBuf::from)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

fn series_hash(series: &CandleSeries) -> Result<String> {
    let mut bytes = Vec::new();
    write_candles_csv(&mut bytes, [series])?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn load(config: &RunConfig) -> Result<BTreeMap<String, CandleSeries>> {
    let cache = matches!(config.data_source, DataSource::Http(_)).then(|| cache_dir(config));
    config.load_market(cache.as_deref())
}

/// Config, seeds, per-asset data hashes, and the build version: enough to
/// repeat the run byte for byte.
fn manifest(config: &RunConfig, data: &BTreeMap<String, CandleSeries>, extra: &[(&str, String)]) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(
        out,
        "seeds = data {} policy {} training {}",
        config.data_seed, config.policy_seed, config.training_seed
    )
    .unwrap();
    for (asset, series) in data {
        writeln!(out, "data.{asset} = sha256:{}", series_hash(series)?).unwrap();
    }
    for (k, v) in extra {
        writeln!(out, "{k} = {v}").unwrap();
    }
    out.push_str("\n[config]\n");
    out.push_str(&config.to_text());
    Ok(out)
}

fn ingest(config: &RunConfig) -> Result<()> {
    let all = load(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let store = config.output_dir.join("candles.csv");
    write_candles_csv(fs::File::create(&store)?, all.values())?;
    let mut missing_total = 0;
    for (asset, series) in &all {
        let missing = series.missing_count();
        missing_total += missing;
        println!("{asset}: {}/{} periods", series.len() - missing, series.len());
    }
    if missing_total == 0 {
        println!("coverage: complete");
    } else {
        println!("coverage: {missing_total} missing periods, filled flat when a run prepares the panel");
    }
    fs::write(config.output_dir.join("ingest_manifest.txt"), manifest(config, &all, &[])?)?;
    println!("stored {}", store.display());
    Ok(())
}

fn prepared(config: &RunConfig) -> Result<(BTreeMap<String, CandleSeries>, PreparedData)> {
    let all = load(config)?;
    let data = config.prepare(&all)?;
    Ok((all, data))
}

fn train(config: &RunConfig, resume: bool) -> Result<()> {
    let (all, data) = prepared(config)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let ckpt = out.join("policy.ckpt");
    let mut trainer = if resume && state_path(&ckpt).exists() {
        let t = Trainer::resume(&ckpt, config.training()?)?;
        eprintln!("resuming at step {} of {}", t.step, config.total_steps);
        t
    } else {
        config.trainer(&data)?
    };
    let every = (config.checkpoint_every > 0).then_some((ckpt.as_path(), config.checkpoint_every));
    let started = std::time::Instant::now();
    let outcome = trainer.pretrain(&data.panel, data.train_last, every);
    trainer.save(&ckpt)?;
    outcome?;
    eprintln!("trained {} steps in {:.1}s", trainer.step, started.elapsed().as_secs_f64());
    trainer.write_curve_csv(fs::File::create(out.join("curve.csv"))?)?;
    let extra = [("assets", data.panel.assets.join(",")), ("checkpoint.sha256", sha256_file(&ckpt)?)];
    fs::write(out.join("manifest.txt"), manifest(config, &all, &extra)?)?;
    if let Some(last) = trainer.curve.last() {
        println!("step {}: R {:.6}, objective {:.6}", last.step, last.reward, last.objective);
    }
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn write_report(dir: &Path, report: &BacktestReport) -> Result<()> {
    let stem = report.strategy.to_lowercase().replace(' ', "_");
    report.write_ledger_csv(fs::File::create(dir.join(format!("{stem}_ledger.csv")))?)?;
    report.write_plot_csv(fs::File::create(dir.join(format!("{stem}_plot.csv")))?)?;
    fs::write(dir.join(format!("{stem}_summary.json")), report.summary_json()?)?;
    Ok(())
}

fn backtest(config: &RunConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let ckpt = checkpoint.unwrap_or_else(|| config.output_dir.join("policy.ckpt"));
    if !ckpt.exists() || !state_path(&ckpt).exists() {
        return Err(Error::Data(format!("checkpoint {} not found; run `eiie train` first", ckpt.display())));
    }
    let (all, data) = prepared(config)?;
    let mut trainer = Trainer::resume(&ckpt, config.training()?)?;
    // A finished run with a smaller step budget is still unfinished for this one.
    let complete = checkpoint_is_complete(&ckpt)? && trainer.step >= config.total_steps;
    if !complete {
        eprintln!(
            "warning: {} is a partial checkpoint ({} of {} steps); training did not finish",
            ckpt.display(),
            trainer.step,
            config.total_steps
        );
    }
    if trainer.memory.len() != data.panel.len() {
        return Err(Error::Config(format!(
            "checkpoint covers {} periods, this configuration {}",
            trainer.memory.len(),
            data.panel.len()
        )));
    }
    let policy = run_backtest(&mut trainer, &data.panel, &config.backtest(&data)?)?;
    let bench = config.benchmark(&data)?;
    let reports = [
        policy,
        benchmark_ubah(&data.panel, &bench)?,
        benchmark_ucrp(&data.panel, &bench)?,
        benchmark_best_stock(&data.panel, &bench)?,
    ];
    let dir = config.output_dir.join("backtest");
    fs::create_dir_all(&dir)?;
    for r in &reports {
        write_report(&dir, r)?;
    }
    let table = compare(&reports.iter().collect::<Vec<_>>())?;
    table.write_csv(fs::File::create(dir.join("comparison.csv"))?)?;
    let text = table.to_text();
    fs::write(dir.join("comparison.txt"), &text)?;
    let extra = [
        ("assets", data.panel.assets.join(",")),
        ("checkpoint.sha256", sha256_file(&ckpt)?),
        ("checkpoint.complete", complete.to_string()),
    ];
    fs::write(dir.join("manifest.txt"), manifest(config, &all, &extra)?)?;
    print!("{text}");
    Ok(())
}

fn report(config: &RunConfig) -> Result<()> {
    let dir = &config.output_dir;
    let table = dir.join("backtest").join("comparison.txt");
    let curve = dir.join("curve.csv");
    if !table.exists() && !curve.exists() {
        return Err(Error::Data(format!("no finished run under {}", dir.display())));
    }
    if curve.exists() {
        let mut rdr = csv::Reader::from_path(&curve)?;
        let rewards: Vec<f64> = rdr
            .records()
            .map(|r| -> Result<f64> {
                let r = r?;
                r.get(1)
                    .unwrap_or("")
                    .parse()
                    .map_err(|e| Error::Data(format!("curve.csv: {e}")))
            })
            .collect::<Result<_>>()?;
        if !rewards.is_empty() {
            let k = (rewards.len() / 10).max(1);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            println!(
                "training: {} steps, mean R over first {k} steps {:.6}, over last {k} steps {:.6}",
                rewards.len(),
                mean(&rewards[..k]),
                mean(&rewards[rewards.len() - k..])
            );
        }
    }
    if table.exists() {
        print!("{}", fs::read_to_string(&table)?);
    }
    Ok(())
}
