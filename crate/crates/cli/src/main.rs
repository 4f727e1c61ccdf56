use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pathcast_core::backtest::config::apply_override;
use pathcast_core::backtest::{
    load_cgm, replay_ensembles, run_backtest, train_cgm, version_string, write_reports, write_score_reports,
    write_summary, write_trading_reports, BacktestConfig, BacktestOutcome, CgmSource, RunMeta, RunOptions, Schedule,
};
use pathcast_core::bands::{build_bands, write_bands_csv, BandSide};
use pathcast_core::cgm::checkpoint::config_hash;
use pathcast_core::market_data::{ingest, write_csv, MarketFrame, SchemaConfig};
use pathcast_core::path_samplers::{Generator, TrajectoryEnsemble};
use pathcast_core::synth::{generate, SynthConfig};

/// Probabilistic intraday price-path forecasting: backtests, scores, bands
/// and trading.
#[derive(Debug, Parser)]
#[command(name = "pathcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Configuration override, e.g. `--set windows.lasso_days=28`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value = "pathcast-out")]
    out_dir: PathBuf,

    /// Comma-separated subset of BOOTSTRAP, LQC, CGM.
    #[arg(long, global = true, value_delimiter = ',')]
    engines: Option<Vec<String>>,

    /// Exit with status 0 even when products were skipped.
    #[arg(long, global = true)]
    allow_skips: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a market CSV and report its coverage.
    Ingest {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write a synthetic market CSV (`--set` keys address the generator).
    Synth {
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train the generator ensemble on the fixed window before the test start.
    TrainCgm {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Keep member checkpoints that match the configuration.
        #[arg(long)]
        resume: bool,
    },
    /// Rolling-window backtest with reports.
    Backtest {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write every sampled ensemble below `<out-dir>/ensembles`.
        #[arg(long)]
        save_ensembles: bool,
    },
    /// Score saved ensembles against observed paths.
    Score {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ensembles: PathBuf,
    },
    /// Prediction bands of one saved ensemble.
    Bands {
        #[arg(long)]
        ensemble: PathBuf,
        /// Coverage levels; defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        scp: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "both")]
        side: SideArg,
    },
    /// Trade saved ensembles against observed paths.
    Trade {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ensembles: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Upper,
    Lower,
    Both,
}

impl Cli {
    fn backtest_config(&self) -> Result<BacktestConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(engines) = &self.engines {
            let list: Vec<String> = engines.iter().filter(|e| !e.is_empty()).map(|e| format!("{:?}", e.trim())).collect();
            overrides.push(format!("engines=[{}]", list.join(",")));
        }
        Ok(BacktestConfig::load(self.config.as_deref(), &overrides)?)
    }
}

fn load_frame(flag: Option<&Path>, cfg: &BacktestConfig) -> Result<MarketFrame> {
    let path = flag.or(cfg.data.as_deref()).context("no market data: pass --data or set `data` in the config")?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ingest(BufReader::new(file), &SchemaConfig::default()).with_context(|| format!("ingesting {}", path.display()))
}

fn exit_for(outcome: &BacktestOutcome, allow_skips: bool) -> ExitCode {
    if !outcome.audit.violations.is_empty() {
        eprintln!("leakage audit failed: {} violations", outcome.audit.violations.len());
        return ExitCode::from(3);
    }
    if !outcome.skips.is_empty() && !allow_skips {
        eprintln!("{} skipped entries (see skips.csv); rerun with --allow-skips to accept", outcome.skips.len());
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn cmd_ingest(cli: &Cli, data: &Path) -> Result<ExitCode> {
    let cfg = BacktestConfig::default();
    let frame = load_frame(Some(data), &cfg)?;
    let keys = frame.keys().count();
    let summary = serde_json::json!({
        "source": data,
        "keys": keys,
        "days": frame.days(),
        "first_day": frame.start_date(),
        "last_day": frame.last_date(),
        "missing_rows": frame.len() - keys,
        "missing_cells": frame.missing_cells(),
        "content_hash": frame.content_hash(),
    });
    std::fs::create_dir_all(&cli.out_dir)?;
    std::fs::write(cli.out_dir.join("ingest.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{keys} hourly products over {} days, {} missing cells", frame.days(), frame.missing_cells());
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(cli: &Cli, days: Option<usize>) -> Result<ExitCode> {
    let mut table = toml::Table::new();
    for o in &cli.overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(d) = days {
        table.insert("days".into(), toml::Value::Integer(d as i64));
    }
    if let Some(s) = cli.seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    if let Some(toml::Value::Datetime(d)) = table.get("start") {
        let s = d.to_string();
        table.insert("start".into(), toml::Value::String(s));
    }
    let cfg: SynthConfig = table.try_into().context("synthetic generator settings")?;
    if cfg.days == 0 {
        bail!("days must be at least 1");
    }
    let market = generate(&cfg);
    std::fs::create_dir_all(&cli.out_dir)?;
    let csv_path = cli.out_dir.join("market.csv");
    write_csv(&market.frame, BufWriter::new(File::create(&csv_path)?))?;
    let mut w = BufWriter::new(File::create(cli.out_dir.join("noise_scale.csv"))?);
    writeln!(w, "date,hour,noise_scale")?;
    for (t, s) in market.noise_scale.iter().enumerate() {
        let k = market.frame.key_at(t);
        writeln!(w, "{},{},{}", k.date, k.hour, s)?;
    }
    w.flush()?;
    println!("wrote {} ({} days)", csv_path.display(), cfg.days);
    Ok(ExitCode::SUCCESS)
}

fn checkpoint_dir(cli: &Cli, cfg: &BacktestConfig) -> PathBuf {
    cfg.cgm.checkpoint_dir.clone().unwrap_or_else(|| cli.out_dir.join("cgm"))
}

fn cmd_train_cgm(cli: &Cli, data: Option<&Path>, resume: bool) -> Result<ExitCode> {
    let cfg = cli.backtest_config()?;
    let frame = load_frame(data, &cfg)?;
    let dir = checkpoint_dir(cli, &cfg);
    let start = Instant::now();
    let (source, manifest) = train_cgm(&frame, &cfg, Some(&dir), resume)?;
    for (i, m) in source.ensemble.members.iter().enumerate() {
        let best = m.history.iter().map(|r| r.validation_loss).fold(f64::INFINITY, f64::min);
        println!("member {i}: {} epochs, best validation loss {best}", m.history.len());
    }
    println!(
        "trained {} members on {} examples in {:.1} s -> {}",
        manifest.members,
        manifest.examples,
        start.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cgm_for_backtest(cfg: &BacktestConfig, frame: &MarketFrame) -> Result<Option<CgmSource>> {
    if !cfg.generators()?.contains(&Generator::Cgm) {
        return Ok(None);
    }
    let Some(dir) = &cfg.cgm.checkpoint_dir else { return Ok(None) };
    let (source, manifest) = load_cgm(dir).with_context(|| format!("loading checkpoints from {}", dir.display()))?;
    let schedule = Schedule::new(frame, cfg)?;
    if manifest.test_start != schedule.test_start {
        bail!("checkpoints were trained for a test start of {}, not {}", manifest.test_start, schedule.test_start);
    }
    if manifest.config_hash != config_hash(&cfg.cgm.train_config(cfg.seed)) {
        bail!("checkpoints in {} were trained with a different configuration", dir.display());
    }
    if manifest.members != cfg.samples.cgm_members {
        bail!("{} checkpoints found, {} members configured", manifest.members, cfg.samples.cgm_members);
    }
    Ok(Some(source))
}

fn cmd_backtest(cli: &Cli, data: Option<&Path>, save_ensembles: bool) -> Result<ExitCode> {
    let cfg = cli.backtest_config()?;
    let frame = load_frame(data, &cfg)?;
    let start = Instant::now();
    let cgm = cgm_for_backtest(&cfg, &frame)?;
    let options = RunOptions { ensemble_dir: save_ensembles.then(|| cli.out_dir.join("ensembles")) };
    let outcome = run_backtest(&frame, &cfg, cgm.as_ref(), &options)?;
    let meta = RunMeta {
        version: version_string(),
        config_hash: cfg.hash(),
        data_hash: frame.content_hash(),
        wall_seconds: start.elapsed().as_secs_f64(),
        config: cfg.to_toml(),
    };
    write_reports(&outcome, &cli.out_dir, &meta)?;
    println!(
        "{} test products, {} skipped entries, {} leakage violations, reports in {}",
        outcome.test_keys,
        outcome.skips.len(),
        outcome.audit.violations.len(),
        cli.out_dir.display()
    );
    Ok(exit_for(&outcome, cli.allow_skips))
}

fn replay(cli: &Cli, data: Option<&Path>, ensembles: &Path) -> Result<BacktestOutcome> {
    let cfg = cli.backtest_config()?;
    let frame = load_frame(data, &cfg)?;
    Ok(replay_ensembles(&frame, ensembles, &cfg.generators()?, &cfg.scp_grid)?)
}

fn cmd_score(cli: &Cli, data: Option<&Path>, ensembles: &Path) -> Result<ExitCode> {
    let outcome = replay(cli, data, ensembles)?;
    write_score_reports(&outcome, &cli.out_dir)?;
    write_summary(&outcome, &cli.out_dir)?;
    for (g, rows) in &outcome.scores {
        println!("{g}: {} scored products", rows.len());
    }
    Ok(exit_for(&outcome, cli.allow_skips))
}

fn cmd_trade(cli: &Cli, data: Option<&Path>, ensembles: &Path) -> Result<ExitCode> {
    let outcome = replay(cli, data, ensembles)?;
    write_trading_reports(&outcome, &cli.out_dir)?;
    write_summary(&outcome, &cli.out_dir)?;
    for (s, t) in &outcome.ledger.totals {
        if let Some(rtp) = t.rtp() {
            if !matches!(s, pathcast_core::trading::Strategy::Band { .. }) {
                println!("{s}: profit {:.2}, RTP {rtp:.2}", t.profit);
            }
        }
    }
    Ok(exit_for(&outcome, cli.allow_skips))
}

fn cmd_bands(cli: &Cli, ensemble: &Path, scp: Option<&[f64]>, side: SideArg) -> Result<ExitCode> {
    let cfg = cli.backtest_config()?;
    let e = TrajectoryEnsemble::read_binary(ensemble).with_context(|| format!("reading {}", ensemble.display()))?;
    let grid = scp.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.scp_grid.clone());
    if grid.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        bail!("SCP values must lie in (0, 1]");
    }
    let sides = match side {
        SideArg::Upper => vec![BandSide::Upper],
        SideArg::Lower => vec![BandSide::Lower],
        SideArg::Both => vec![BandSide::Upper, BandSide::Lower],
    };
    let mut rows = Vec::new();
    for s in sides {
        rows.extend(build_bands(e.samples.view(), &grid, s).into_iter().map(|b| (e.key, b)));
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let path = cli.out_dir.join("bands.csv");
    write_bands_csv(&rows, BufWriter::new(File::create(&path)?))?;
    println!("{} bands for {} ({} paths) -> {}", rows.len(), e.key, e.m(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Ingest { data } => cmd_ingest(cli, data),
        Command::Synth { days } => cmd_synth(cli, *days),
        Command::TrainCgm { data, resume } => cmd_train_cgm(cli, data.as_deref(), *resume),
        Command::Backtest { data, save_ensembles } => cmd_backtest(cli, data.as_deref(), *save_ensembles),
        Command::Score { data, ensembles } => cmd_score(cli, data.as_deref(), ensembles),
        Command::Trade { data, ensembles } => cmd_trade(cli, data.as_deref(), ensembles),
        Command::Bands { ensemble, scp, side } => cmd_bands(cli, ensemble, scp.as_deref(), *side),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
