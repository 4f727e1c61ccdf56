//! Report files of a backtest run.
//!
//! Everything except `run.json` depends only on the configuration, the data
//! and the seeds, so repeated runs produce identical bytes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::BacktestOutcome;
use super::BacktestError;
use crate::bands::BandSide;
use crate::path_samplers::Generator;
use crate::scoring::{write_scores_csv, KeyScores};
use crate::trading::{scp_permille, Strategy, StrategyTotals};

/// Metadata that legitimately differs between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub config_hash: String,
    pub data_hash: String,
    pub wall_seconds: f64,
    pub config: String,
}

pub fn version_string() -> String {
    match option_env!("PATHCAST_GIT_REV") {
        Some(rev) => format!("{}+{rev}", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Mean ES, DSS, VS-1 and VS-0.5 of `rows` (DSS over the keys where it exists).
pub fn score_means(rows: &[&KeyScores]) -> [Option<f64>; 4] {
    [
        mean(rows.iter().map(|r| r.es)),
        mean(rows.iter().filter_map(|r| r.dss)),
        mean(rows.iter().map(|r| r.vs1)),
        mean(rows.iter().map(|r| r.vs05)),
    ]
}

fn writer(dir: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<csv::Writer<BufWriter<File>>, BacktestError> {
    let path = dir.join(name);
    let w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    written.push(path);
    Ok(w)
}

fn totals_row(t: Option<&StrategyTotals>) -> Vec<String> {
    match t {
        Some(t) => vec![t.keys.to_string(), t.profit.to_string(), t.cb_max.to_string(), t.cb_min.to_string(), cell(t.rtp())],
        None => vec!["0".into(), String::new(), String::new(), String::new(), String::new()],
    }
}

/// Writes all report files into `dir` and returns their paths.
pub fn write_reports(outcome: &BacktestOutcome, dir: &Path, meta: &RunMeta) -> Result<Vec<PathBuf>, BacktestError> {
    let mut written = write_score_reports(outcome, dir)?;
    written.extend(write_trading_reports(outcome, dir)?);
    written.extend(write_summary(outcome, dir)?);
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(meta)? + "\n")?;
    written.push(path);
    Ok(written)
}

/// `scores_<engine>.csv`, `scores_table.csv` and `scores_hourly.csv`.
pub fn write_score_reports(outcome: &BacktestOutcome, dir: &Path) -> Result<Vec<PathBuf>, BacktestError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    for (g, rows) in &outcome.scores {
        let path = dir.join(format!("scores_{}.csv", g.as_str().to_ascii_lowercase()));
        write_scores_csv(rows, BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }

    let mut w = writer(dir, "scores_table.csv", &mut written)?;
    w.write_record(["engine", "subset", "keys", "es", "dss", "vs1", "vs05", "status"])?;
    for (g, rows) in &outcome.scores {
        for (subset, peak) in [("on_peak", Some(true)), ("off_peak", Some(false)), ("all", None)] {
            let sel: Vec<&KeyScores> = rows.iter().filter(|r| peak.is_none_or(|p| r.key.is_peak() == p)).collect();
            let m = score_means(&sel);
            let status = if sel.is_empty() { "skipped" } else { "ok" };
            let mut rec = vec![g.as_str().to_string(), subset.to_string(), sel.len().to_string()];
            rec.extend(m.iter().map(|v| cell(*v)));
            rec.push(status.into());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = writer(dir, "scores_hourly.csv", &mut written)?;
    w.write_record(["engine", "hour", "keys", "es", "dss", "vs1", "vs05"])?;
    for (g, rows) in &outcome.scores {
        for h in 0..24u8 {
            let sel: Vec<&KeyScores> = rows.iter().filter(|r| r.key.hour == h).collect();
            let mut rec = vec![g.as_str().to_string(), h.to_string(), sel.len().to_string()];
            rec.extend(score_means(&sel).iter().map(|v| cell(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(written)
}

/// Profit tables, the argmax histogram and the per-decision ledger.
pub fn write_trading_reports(outcome: &BacktestOutcome, dir: &Path) -> Result<Vec<PathBuf>, BacktestError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let ledger = &outcome.ledger;
    let mut w = writer(dir, "profits_majority.csv", &mut written)?;
    w.write_record(["strategy", "keys", "profit", "cb_max", "cb_min", "rtp"])?;
    let mut fixed = vec![
        Strategy::NaiveFirst,
        Strategy::NaiveLast,
        Strategy::NaiveAvg,
        Strategy::CrystalBallMax,
        Strategy::CrystalBallMin,
    ];
    fixed.extend(outcome.engines.iter().map(|g| Strategy::Majority { engine: g.as_str().into() }));
    for s in &fixed {
        let mut rec = vec![s.to_string()];
        rec.extend(totals_row(ledger.totals.get(s)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = writer(dir, "profits_bands.csv", &mut written)?;
    w.write_record(["engine", "side", "scp", "keys", "profit", "cb_max", "cb_min", "rtp"])?;
    for g in &outcome.engines {
        for side in [BandSide::Upper, BandSide::Lower] {
            for &scp in &outcome.scp_grid {
                let s = Strategy::Band { engine: g.as_str().into(), side, scp_permille: scp_permille(scp) };
                let mut rec = vec![g.as_str().to_string(), side.as_str().to_string(), scp.to_string()];
                rec.extend(totals_row(ledger.totals.get(&s)));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(dir, "argmax_hist.csv", &mut written)?;
    let mut header = vec!["source".to_string()];
    header.extend((1..=10).map(|j| format!("t{j}")));
    w.write_record(&header)?;
    let mut rec = vec!["observed".to_string()];
    rec.extend(ledger.observed_argmax.iter().map(usize::to_string));
    w.write_record(&rec)?;
    for (g, hist) in &outcome.engine_argmax {
        let mut rec = vec![format!("majority:{}", g.as_str())];
        rec.extend(hist.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let path = dir.join("ledger.csv");
    ledger.write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);

    Ok(written)
}

/// `skips.csv` and `summary.json`.
pub fn write_summary(outcome: &BacktestOutcome, dir: &Path) -> Result<Vec<PathBuf>, BacktestError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let ledger = &outcome.ledger;
    let mut w = writer(dir, "skips.csv", &mut written)?;
    w.write_record(["date", "hour", "engine", "reason"])?;
    for s in &outcome.skips {
        w.write_record([
            s.key.date.to_string(),
            s.key.hour.to_string(),
            s.engine.map(|g| g.as_str().to_string()).unwrap_or_default(),
            s.reason.clone(),
        ])?;
    }
    w.flush()?;

    let engine_means: serde_json::Map<String, serde_json::Value> = outcome
        .scores
        .iter()
        .map(|(g, rows)| {
            let m = score_means(&rows.iter().collect::<Vec<_>>());
            (g.as_str().to_string(), serde_json::json!({ "keys": rows.len(), "es": m[0], "dss": m[1], "vs1": m[2], "vs05": m[3] }))
        })
        .collect();
    let summary = serde_json::json!({
        "test_start": outcome.schedule.test_start,
        "test_end": outcome.schedule.test_end,
        "engines": outcome.engines.iter().map(Generator::as_str).collect::<Vec<_>>(),
        "test_keys": outcome.test_keys,
        "skipped": outcome.skips.len(),
        "leakage_checked": outcome.audit.checked,
        "leakage_violations": outcome.audit.violations,
        "scores": engine_means,
        "trading": ledger.summary_json(),
        "cgm": outcome.cgm,
    });
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    written.push(path);
    Ok(written)
}
