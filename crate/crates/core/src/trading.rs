//! Fixed-volume selling strategies (1 MWh per hourly product), crystal-ball
//! bounds and realized trading potential.
//!
//! Subperiod indices are 1-based (`1..=10`) throughout this module.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::{BandSide, PredictionBand};
use crate::market_data::{DeliveryKey, PricePath};

#[derive(Debug, Error, PartialEq)]
pub enum TradingError {
    #[error("subperiod t_{0} is missing")]
    MissingSubperiod(usize),
    #[error("crystal-ball bounds coincide ({0})")]
    DegenerateBounds(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    NaiveFirst,
    NaiveLast,
    NaiveAvg,
    CrystalBallMax,
    CrystalBallMin,
    Majority { engine: String },
    Band { engine: String, side: BandSide, scp_permille: u32 },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::NaiveFirst => write!(f, "naive_first"),
            Strategy::NaiveLast => write!(f, "naive_last"),
            Strategy::NaiveAvg => write!(f, "naive_avg"),
            Strategy::CrystalBallMax => write!(f, "cb_max"),
            Strategy::CrystalBallMin => write!(f, "cb_min"),
            Strategy::Majority { engine } => write!(f, "majority:{engine}"),
            Strategy::Band { engine, side, scp_permille } => {
                write!(f, "band:{engine}:{}:{}", side.as_str(), *scp_permille as f64 / 1000.0)
            }
        }
    }
}

pub fn scp_permille(scp: f64) -> u32 {
    (scp * 1000.0).round() as u32
}

/// Sale decision for one hourly product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeDecision {
    pub key: DeliveryKey,
    pub strategy: Strategy,
    /// Chosen subperiod, `Some(0)` for the `t_0` market order, `None` for the
    /// uniform split over all ten subperiods.
    pub chosen: Option<usize>,
    /// Revenue in EUR for 1 MWh.
    pub revenue: f64,
}

/// 1-based index of the maximum; ties go to the latest index.
pub fn argmax_latest(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate() {
        if *v >= values[best] {
            best = j;
        }
    }
    best + 1
}

/// Most frequent per-trajectory argmax subperiod. Ties between modes go to
/// the index with the higher ensemble-mean price, then to the later index.
pub fn majority_vote(samples: ArrayView2<f64>) -> usize {
    let (m, d) = samples.dim();
    assert!(m >= 1, "majority vote needs at least one trajectory");
    let mut counts = vec![0usize; d];
    let mut means = vec![0.0; d];
    for row in samples.rows() {
        let r = row.to_vec();
        counts[argmax_latest(&r) - 1] += 1;
        for (acc, x) in means.iter_mut().zip(&r) {
            *acc += x;
        }
    }
    let mut best = 0;
    for j in 1..d {
        let better = counts[j] > counts[best] || (counts[j] == counts[best] && means[j] >= means[best]);
        if better {
            best = j;
        }
    }
    best + 1
}

/// Subperiod with the highest band value (latest on ties).
pub fn band_decision(band: &PredictionBand) -> usize {
    argmax_latest(&band.values)
}

/// The three naive benchmarks for one path. `Naive_first` sells at the
/// `t_0` VWAP and fails alone when that cell is missing.
pub struct NaiveDecisions {
    pub first: Result<f64, TradingError>,
    pub last: f64,
    pub avg: f64,
}

pub fn naive_decisions(path: &PricePath) -> NaiveDecisions {
    NaiveDecisions {
        first: path.last_pre.ok_or(TradingError::MissingSubperiod(0)),
        last: path.values[path.values.len() - 1],
        avg: path.values.iter().sum::<f64>() / path.values.len() as f64,
    }
}

/// `(max, min)` realized price over `t_1..t_10`.
pub fn crystal_ball(path: &PricePath) -> (f64, f64) {
    path.values
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &x| (hi.max(x), lo.min(x)))
}

/// Realized trading potential in percent.
pub fn rtp(profit: f64, cb_max: f64, cb_min: f64) -> Result<f64, TradingError> {
    if cb_max <= cb_min {
        return Err(TradingError::DegenerateBounds(cb_max));
    }
    Ok((profit - cb_min) / (cb_max - cb_min) * 100.0)
}

/// Totals of one strategy together with the crystal-ball totals over the
/// same set of traded products.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyTotals {
    pub profit: f64,
    pub cb_max: f64,
    pub cb_min: f64,
    pub keys: usize,
}

impl StrategyTotals {
    pub fn rtp(&self) -> Option<f64> {
        rtp(self.profit, self.cb_max, self.cb_min).ok()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfitLedger {
    pub decisions: Vec<TradeDecision>,
    pub totals: BTreeMap<Strategy, StrategyTotals>,
    pub cb_max_total: f64,
    pub cb_min_total: f64,
    /// Products without a complete observed path.
    pub skipped_keys: usize,
    /// Histogram of the observed argmax subperiod (index 0 = `t_1`).
    pub observed_argmax: [usize; 10],
}

impl ProfitLedger {
    /// Books the crystal-ball bounds and naive benchmarks of one product.
    pub fn book_benchmarks(&mut self, key: DeliveryKey, path: &PricePath) {
        let (hi, lo) = crystal_ball(path);
        self.cb_max_total += hi;
        self.cb_min_total += lo;
        self.observed_argmax[argmax_latest(&path.values) - 1] += 1;
        let naive = naive_decisions(path);
        if let Ok(first) = naive.first {
            self.book(key, path, Strategy::NaiveFirst, Some(0), first);
        }
        self.book(key, path, Strategy::NaiveLast, Some(path.values.len()), naive.last);
        self.book(key, path, Strategy::NaiveAvg, None, naive.avg);
        let jmax = argmax_latest(&path.values);
        let jmin = path
            .values
            .iter()
            .enumerate()
            .fold(0, |b, (j, &x)| if x <= path.values[b] { j } else { b })
            + 1;
        self.book(key, path, Strategy::CrystalBallMax, Some(jmax), hi);
        self.book(key, path, Strategy::CrystalBallMin, Some(jmin), lo);
    }

    /// Books a single-shot sale at subperiod `j` (1-based).
    pub fn book_choice(&mut self, key: DeliveryKey, path: &PricePath, strategy: Strategy, j: usize) {
        let revenue = path.values[j - 1];
        self.book(key, path, strategy, Some(j), revenue);
    }

    fn book(&mut self, key: DeliveryKey, path: &PricePath, strategy: Strategy, chosen: Option<usize>, revenue: f64) {
        let (hi, lo) = crystal_ball(path);
        let t = self.totals.entry(strategy.clone()).or_default();
        t.profit += revenue;
        t.cb_max += hi;
        t.cb_min += lo;
        t.keys += 1;
        self.decisions.push(TradeDecision { key, strategy, chosen, revenue });
    }

    pub fn rtp(&self, strategy: &Strategy) -> Option<f64> {
        self.totals.get(strategy).and_then(StrategyTotals::rtp)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "hour", "strategy", "chosen_j", "revenue"])?;
        for d in &self.decisions {
            w.write_record([
                d.key.date.to_string(),
                d.key.hour.to_string(),
                d.strategy.to_string(),
                d.chosen.map(|j| j.to_string()).unwrap_or_else(|| "avg".into()),
                d.revenue.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary document: totals and RTP per strategy.
    pub fn summary_json(&self) -> serde_json::Value {
        let strategies: serde_json::Map<String, serde_json::Value> = self
            .totals
            .iter()
            .map(|(s, t)| {
                (
                    s.to_string(),
                    serde_json::json!({
                        "profit": t.profit,
                        "cb_max": t.cb_max,
                        "cb_min": t.cb_min,
                        "keys": t.keys,
                        "rtp": t.rtp(),
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "cb_max_total": self.cb_max_total,
            "cb_min_total": self.cb_min_total,
            "skipped_keys": self.skipped_keys,
            "strategies": strategies,
        })
    }
}
