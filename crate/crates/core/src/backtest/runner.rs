//! Rolling-window backtest.
//!
//! Window schedule relative to test day `d` (all windows end before `d`):
//! LEAR for hour `h` is fitted on the same hour of days `[d-L, d)`; the
//! quantile regressions for day `d` pool all hours of days `[d-Q-1, d-1)`
//! (one extra day of lag because late hours of `d-1` are still trading at
//! the early origins of `d`); the copula uses PITs of hour `h` over
//! `[d-C, d)`; the bootstrap pool holds the errors of hour `h` over
//! `[d-B, d)`. The generator ensemble is trained once on the days before the
//! test start, restricted to examples observable at the first origin.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BacktestConfig;
use super::BacktestError;
use crate::bands::{build_bands, BandSide};
use crate::cgm::checkpoint;
use crate::cgm::{CgmDataset, CgmEnsemble, TrainedCgm};
use crate::marginal_quantiles::{MarginalCdf, QuantileModel};
use crate::market_data::{
    build_cgm_inputs, build_lear_features, DeliveryKey, FeatureVector, MarketFrame, PricePath, Series, SUBPERIODS,
};
use crate::path_samplers::{
    derive_seed, estimate_copula, sample_bootstrap_paths, sample_copula_paths, ErrorVectorPool, Generator,
    TrajectoryEnsemble, MIN_COPULA_DAYS,
};
use crate::point_forecast::{fit_lear, predict_path, PointPathForecast};
use crate::scoring::{score_ensemble, KeyScores};
use crate::trading::{band_decision, majority_vote, scp_permille, ProfitLedger, Strategy};

/// A value together with the latest availability time of everything it was
/// computed from.
#[derive(Debug, Clone)]
struct Dated<T> {
    value: T,
    used: i64,
}

type Slot<T> = Result<Dated<T>, String>;

/// Trained generator ensemble plus the latest availability time among its
/// training data.
#[derive(Debug, Clone)]
pub struct CgmSource {
    pub ensemble: CgmEnsemble,
    pub latest_input: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgmManifest {
    pub members: usize,
    pub config_hash: String,
    pub test_start: NaiveDate,
    pub examples: usize,
    pub latest_input: i64,
}

pub const CGM_MANIFEST: &str = "manifest.json";

pub fn member_checkpoint(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("member_{i:02}.ckpt"))
}

/// Days covered by the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub test_start: NaiveDate,
    /// Exclusive.
    pub test_end: NaiveDate,
    /// First day that needs a point forecast.
    pub point_start: NaiveDate,
    /// First day that needs marginal quantiles.
    pub fan_start: NaiveDate,
}

impl Schedule {
    pub fn new(frame: &MarketFrame, cfg: &BacktestConfig) -> Result<Self, BacktestError> {
        if frame.is_empty() {
            return Err(BacktestError::InsufficientData("empty market frame".into()));
        }
        let days = cfg.test_days as i64;
        let test_start = cfg.test_start.unwrap_or(frame.last_date() - Duration::days(days - 1));
        let test_end = test_start + Duration::days(days);
        if test_end > frame.last_date() + Duration::days(1) {
            return Err(BacktestError::InsufficientData(format!(
                "test period ends {test_end} after the data ({})",
                frame.last_date()
            )));
        }
        let engines = cfg.generators()?;
        let w = &cfg.windows;
        let mut point_lead = 0;
        if engines.contains(&Generator::Lqc) {
            point_lead = point_lead.max(w.copula_days + w.qr_days + 1);
        }
        if engines.contains(&Generator::Bootstrap) {
            point_lead = point_lead.max(w.bootstrap_days);
        }
        let point_start = test_start - Duration::days(point_lead as i64);
        let fan_start = test_start - Duration::days(w.copula_days as i64);
        let mut earliest = test_start;
        if point_lead > 0 {
            earliest = earliest.min(point_start - Duration::days(w.lasso_days as i64));
        }
        if engines.contains(&Generator::Cgm) {
            earliest = earliest.min(test_start - Duration::days(w.cgm_days as i64));
        }
        if earliest < frame.start_date() {
            return Err(BacktestError::InsufficientData(format!(
                "windows reach back to {earliest}, data starts {}",
                frame.start_date()
            )));
        }
        Ok(Self { test_start, test_end, point_start, fan_start })
    }

    pub fn test_keys(&self) -> Vec<DeliveryKey> {
        days(self.test_start, self.test_end).flat_map(|d| (0..24).map(move |h| DeliveryKey::new(d, h))).collect()
    }
}

fn days(from: NaiveDate, to: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    let n = (to - from).num_days().max(0);
    (0..n).map(move |i| from + Duration::days(i))
}

fn path_available(key: &DeliveryKey) -> i64 {
    Series::Vwap(SUBPERIODS as u8).available_at(key)
}

/// Training examples of the generator: days `[test_start - W, test_start)`
/// with complete inputs and paths, each fully observable at the first test
/// origin. Returns the dataset and the latest availability time used.
pub fn cgm_training_data(frame: &MarketFrame, cfg: &BacktestConfig) -> Result<(CgmDataset, i64), BacktestError> {
    let schedule = Schedule::new(frame, &BacktestConfig { engines: vec!["CGM".into()], ..cfg.clone() })?;
    let cutoff = DeliveryKey::new(schedule.test_start, 0).forecast_origin();
    let from = schedule.test_start - Duration::days(cfg.windows.cgm_days as i64);
    let keys: Vec<DeliveryKey> =
        days(from, schedule.test_start).flat_map(|d| (0..24).map(move |h| DeliveryKey::new(d, h))).collect();
    let examples: Vec<_> = keys
        .par_iter()
        .filter_map(|key| {
            let path = frame.path_for(key).ok()?;
            let inputs = build_cgm_inputs(frame, *key).ok()?;
            let used = path_available(key).max(inputs.latest_input());
            (used <= cutoff).then_some((inputs, path.values, used))
        })
        .collect();
    if examples.is_empty() {
        return Err(BacktestError::InsufficientData("no generator training examples".into()));
    }
    let latest = examples.iter().map(|e| e.2).max().expect("nonempty");
    let inputs: Vec<_> = examples.iter().map(|e| e.0.clone()).collect();
    let paths: Vec<_> = examples.iter().map(|e| e.1).collect();
    Ok((CgmDataset::from_examples(&inputs, &paths), latest))
}

/// Trains the generator ensemble. With `dir`, each member is checkpointed as
/// it finishes; with `resume`, members whose checkpoint matches the current
/// configuration are loaded instead of retrained.
pub fn train_cgm(
    frame: &MarketFrame,
    cfg: &BacktestConfig,
    dir: Option<&Path>,
    resume: bool,
) -> Result<(CgmSource, CgmManifest), BacktestError> {
    let (data, latest_input) = cgm_training_data(frame, cfg)?;
    let train_cfg = cfg.cgm.train_config(cfg.seed);
    let schedule = Schedule::new(frame, &BacktestConfig { engines: vec!["CGM".into()], ..cfg.clone() })?;
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let members = (0..cfg.samples.cgm_members)
        .into_par_iter()
        .map(|i| -> Result<TrainedCgm, BacktestError> {
            let member_cfg = CgmEnsemble::member_config(&train_cfg, i);
            let path = dir.map(|d| member_checkpoint(d, i));
            if let (true, Some(p)) = (resume, &path) {
                if p.exists() {
                    let m = checkpoint::load(p)?;
                    if m.is_trained() && checkpoint::config_hash(&m.config) == checkpoint::config_hash(&member_cfg) {
                        return Ok(m);
                    }
                }
            }
            let m = crate::cgm::train(&member_cfg, &data)?;
            if let Some(p) = &path {
                checkpoint::save(&m, p)?;
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = CgmManifest {
        members: members.len(),
        config_hash: checkpoint::config_hash(&train_cfg),
        test_start: schedule.test_start,
        examples: data.len(),
        latest_input,
    };
    if let Some(d) = dir {
        std::fs::write(d.join(CGM_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok((CgmSource { ensemble: CgmEnsemble { members }, latest_input }, manifest))
}

/// Loads the checkpoints and manifest written by [`train_cgm`].
pub fn load_cgm(dir: &Path) -> Result<(CgmSource, CgmManifest), BacktestError> {
    let manifest: CgmManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(CGM_MANIFEST))?)?;
    let members = (0..manifest.members)
        .map(|i| checkpoint::load(&member_checkpoint(dir, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((CgmSource { ensemble: CgmEnsemble { members }, latest_input: manifest.latest_input }, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub key: DeliveryKey,
    /// `None` when the whole product was skipped.
    pub engine: Option<Generator>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRecord {
    pub key: DeliveryKey,
    pub engine: Generator,
    pub used: i64,
    pub origin: i64,
}

/// Latest-datum-versus-origin check over every sampled ensemble.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub checked: usize,
    pub violations: Vec<LeakageRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write every sampled ensemble below this directory.
    pub ensemble_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub schedule: Schedule,
    pub engines: Vec<Generator>,
    pub scp_grid: Vec<f64>,
    pub scores: BTreeMap<Generator, Vec<KeyScores>>,
    pub ledger: ProfitLedger,
    /// Histogram of majority-vote choices per engine (index 0 = `t_1`).
    pub engine_argmax: BTreeMap<Generator, [usize; SUBPERIODS]>,
    pub audit: LeakageAudit,
    pub skips: Vec<SkipRecord>,
    pub test_keys: usize,
    pub cgm: Option<CgmManifest>,
}

struct EngineResult {
    generator: Generator,
    used: i64,
    scores: KeyScores,
    majority: usize,
    bands: Vec<(BandSide, f64, usize)>,
}

struct KeyOutcome {
    key: DeliveryKey,
    path: Option<PricePath>,
    engines: Vec<Result<EngineResult, (Generator, String)>>,
}

/// LEAR point forecasts for every hour of `[from, to)`.
fn point_forecasts(
    frame: &MarketFrame,
    cfg: &BacktestConfig,
    feats: &[Option<FeatureVector>],
    observed: &[Option<PointPathForecast>],
    from: NaiveDate,
    to: NaiveDate,
) -> BTreeMap<DeliveryKey, Slot<PointPathForecast>> {
    let lear_cfg = cfg.lear.lear_config();
    let window = cfg.windows.lasso_days as i64;
    let keys: Vec<DeliveryKey> = days(from, to).flat_map(|d| (0..24).map(move |h| DeliveryKey::new(d, h))).collect();
    keys.par_iter()
        .map(|key| {
            let slot = (|| -> Slot<PointPathForecast> {
                let t = frame.index_of(key).ok_or("no market row")?;
                let target = feats[t].as_ref().ok_or("incomplete regressors")?;
                let mut rows = Vec::new();
                let mut targets = Vec::new();
                let mut used = target.latest_input;
                for back in 1..=window {
                    let k = DeliveryKey::new(key.date - Duration::days(back), key.hour);
                    let Some(s) = frame.index_of(&k) else { continue };
                    if let (Some(f), Some(y)) = (&feats[s], observed[s]) {
                        used = used.max(f.latest_input).max(path_available(&k));
                        rows.push(f.clone());
                        targets.push(y);
                    }
                }
                rows.reverse();
                targets.reverse();
                let model = fit_lear(&rows, &targets, &lear_cfg).map_err(|e| format!("LEAR fit: {e}"))?;
                let value = predict_path(&model, target).map_err(|e| format!("LEAR predict: {e}"))?;
                Ok(Dated { value, used })
            })();
            (*key, slot)
        })
        .collect()
}

/// Marginal CDFs for every hour of `[from, to)`.
fn marginal_cdfs(
    frame: &MarketFrame,
    cfg: &BacktestConfig,
    points: &BTreeMap<DeliveryKey, Slot<PointPathForecast>>,
    observed: &[Option<PointPathForecast>],
    from: NaiveDate,
    to: NaiveDate,
) -> BTreeMap<DeliveryKey, Slot<Vec<MarginalCdf>>> {
    let window = cfg.windows.qr_days as i64;
    let day_list: Vec<NaiveDate> = days(from, to).collect();
    day_list
        .par_iter()
        .flat_map_iter(|&d| {
            let mut x: Vec<PointPathForecast> = Vec::new();
            let mut y: Vec<PointPathForecast> = Vec::new();
            let mut used = i64::MIN;
            for day in days(d - Duration::days(window + 1), d - Duration::days(1)) {
                for h in 0..24 {
                    let k = DeliveryKey::new(day, h);
                    let (Some(Ok(p)), Some(t)) = (points.get(&k), frame.index_of(&k)) else { continue };
                    if let Some(obs) = observed[t] {
                        used = used.max(p.used).max(path_available(&k));
                        x.push(p.value);
                        y.push(obs);
                    }
                }
            }
            let models: Result<Vec<QuantileModel>, String> = (0..SUBPERIODS)
                .map(|j| {
                    let xs: Vec<f64> = x.iter().map(|v| v[j]).collect();
                    let ys: Vec<f64> = y.iter().map(|v| v[j]).collect();
                    QuantileModel::fit(j + 1, &xs, &ys).map_err(|e| format!("quantile regression t_{}: {e}", j + 1))
                })
                .collect();
            (0..24u8)
                .map(|h| {
                    let key = DeliveryKey::new(d, h);
                    let slot = match (&models, points.get(&key)) {
                        (Err(e), _) => Err(e.clone()),
                        (_, None) => Err("no point forecast".to_string()),
                        (_, Some(Err(e))) => Err(e.clone()),
                        (Ok(models), Some(Ok(p))) => Ok(Dated {
                            value: models.iter().enumerate().map(|(j, m)| m.predict(p.value[j]).cdf()).collect(),
                            used: used.max(p.used),
                        }),
                    };
                    (key, slot)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

struct Inputs<'a> {
    frame: &'a MarketFrame,
    cfg: &'a BacktestConfig,
    observed: &'a [Option<PointPathForecast>],
    points: &'a BTreeMap<DeliveryKey, Slot<PointPathForecast>>,
    fans: &'a BTreeMap<DeliveryKey, Slot<Vec<MarginalCdf>>>,
    cgm: Option<&'a CgmSource>,
    options: &'a RunOptions,
}

impl Inputs<'_> {
    fn sample(&self, key: DeliveryKey, generator: Generator) -> Result<(TrajectoryEnsemble, i64), String> {
        let seed = derive_seed(self.cfg.seed, &key, generator);
        let same_hour = |back: i64| DeliveryKey::new(key.date - Duration::days(back), key.hour);
        match generator {
            Generator::Bootstrap => {
                let p = slot_of(self.points, &key)?;
                let mut used = p.used;
                let mut pool = ErrorVectorPool::default();
                for back in 1..=self.cfg.windows.bootstrap_days as i64 {
                    let k = same_hour(back);
                    let (Ok(q), Some(obs)) = (slot_of(self.points, &k), self.observed_at(&k)) else { continue };
                    used = used.max(q.used).max(path_available(&k));
                    pool.vectors.push(ErrorVectorPool::from_forecasts(&[q.value], &[obs]).vectors[0]);
                }
                let e = sample_bootstrap_paths(&p.value, &pool, self.cfg.samples.bootstrap, key, seed)
                    .map_err(|e| format!("bootstrap: {e}"))?;
                Ok((e, used))
            }
            Generator::Lqc => {
                let f = slot_of(self.fans, &key)?;
                let mut used = f.used;
                let mut cdfs = Vec::new();
                let mut obs = Vec::new();
                for back in (1..=self.cfg.windows.copula_days as i64).rev() {
                    let k = same_hour(back);
                    let (Ok(g), Some(o)) = (slot_of(self.fans, &k), self.observed_at(&k)) else { continue };
                    used = used.max(g.used).max(path_available(&k));
                    cdfs.push(g.value.clone());
                    obs.push(o);
                }
                if obs.len() < MIN_COPULA_DAYS {
                    return Err(format!("copula window has {} of {MIN_COPULA_DAYS} days", obs.len()));
                }
                let window = format!("{}..{}", same_hour(self.cfg.windows.copula_days as i64).date, key.date);
                let spec = estimate_copula(&cdfs, &obs, window).map_err(|e| format!("copula: {e}"))?;
                let e = sample_copula_paths(&spec, &f.value, self.cfg.samples.lqc, key, seed)
                    .map_err(|e| format!("copula sampling: {e}"))?;
                Ok((e, used))
            }
            Generator::Cgm => {
                let src = self.cgm.ok_or("no generator ensemble")?;
                let inputs = build_cgm_inputs(self.frame, key).map_err(|e| format!("generator inputs: {e}"))?;
                let used = inputs.latest_input().max(src.latest_input);
                let e = src
                    .ensemble
                    .sample(&inputs, self.cfg.samples.cgm_per_member, key, seed)
                    .map_err(|e| format!("generator: {e}"))?;
                Ok((e, used))
            }
        }
    }

    fn observed_at(&self, key: &DeliveryKey) -> Option<PointPathForecast> {
        self.frame.index_of(key).and_then(|t| self.observed[t])
    }

    fn evaluate(&self, key: DeliveryKey, generator: Generator, path: &PricePath) -> Result<EngineResult, String> {
        let (ensemble, used) = self.sample(key, generator)?;
        if let Some(dir) = &self.options.ensemble_dir {
            let file = ensemble_file(dir, generator, &key);
            std::fs::create_dir_all(file.parent().expect("engine dir")).map_err(|e| e.to_string())?;
            ensemble.write_binary(&file).map_err(|e| format!("writing ensemble: {e}"))?;
        }
        evaluate_samples(&ensemble, used, path, &self.cfg.scp_grid)
    }
}

fn evaluate_samples(
    ensemble: &TrajectoryEnsemble,
    used: i64,
    path: &PricePath,
    scp_grid: &[f64],
) -> Result<EngineResult, String> {
    let s = ensemble.samples.view();
    if s.iter().any(|v| !v.is_finite()) {
        return Err("non-finite trajectory".into());
    }
    let scores = score_ensemble(ensemble.key, s, &path.values).map_err(|e| format!("scoring: {e}"))?;
    let majority = majority_vote(s);
    let mut bands = Vec::new();
    for side in [BandSide::Upper, BandSide::Lower] {
        for b in build_bands(s, scp_grid, side) {
            bands.push((side, b.scp, band_decision(&b)));
        }
    }
    Ok(EngineResult { generator: ensemble.generator, used, scores, majority, bands })
}

fn slot_of<'a, T>(map: &'a BTreeMap<DeliveryKey, Slot<T>>, key: &DeliveryKey) -> Result<&'a Dated<T>, String> {
    match map.get(key) {
        Some(Ok(d)) => Ok(d),
        Some(Err(e)) => Err(e.clone()),
        None => Err(format!("{key} outside the calibration schedule")),
    }
}

/// `<dir>/<ENGINE>/<date>_<hour>.bin`.
pub fn ensemble_file(dir: &Path, generator: Generator, key: &DeliveryKey) -> PathBuf {
    dir.join(generator.as_str()).join(format!("{}_{:02}.bin", key.date, key.hour))
}

pub fn run_backtest(
    frame: &MarketFrame,
    cfg: &BacktestConfig,
    cgm: Option<&CgmSource>,
    options: &RunOptions,
) -> Result<BacktestOutcome, BacktestError> {
    cfg.validate()?;
    let schedule = Schedule::new(frame, cfg)?;
    let engines = cfg.generators()?;
    let needs_points = engines.iter().any(|g| matches!(g, Generator::Lqc | Generator::Bootstrap));

    let n = frame.len();
    let observed: Vec<Option<PointPathForecast>> = (0..n).map(|t| frame.path(t).ok().map(|p| p.values)).collect();

    let mut points = BTreeMap::new();
    let mut fans = BTreeMap::new();
    if needs_points {
        let lear_from = schedule.point_start - Duration::days(cfg.windows.lasso_days as i64);
        let first = frame.position(&DeliveryKey::new(lear_from, 0)).max(0) as usize;
        let last = (frame.position(&DeliveryKey::new(schedule.test_end, 0)).max(0) as usize).min(n);
        let feats: Vec<Option<FeatureVector>> = (0..n)
            .into_par_iter()
            .map(|t| {
                if t < first || t >= last {
                    return None;
                }
                frame.record(t)?;
                build_lear_features(frame, frame.key_at(t)).ok()
            })
            .collect();
        points = point_forecasts(frame, cfg, &feats, &observed, schedule.point_start, schedule.test_end);
        if engines.contains(&Generator::Lqc) {
            fans = marginal_cdfs(frame, cfg, &points, &observed, schedule.fan_start, schedule.test_end);
        }
    }

    let trained = match (engines.contains(&Generator::Cgm), cgm) {
        (true, None) => Some(train_cgm(frame, cfg, None, false)?),
        _ => None,
    };
    let cgm = match engines.contains(&Generator::Cgm) {
        true => cgm.or(trained.as_ref().map(|t| &t.0)),
        false => None,
    };
    let manifest = trained.as_ref().map(|t| t.1.clone());

    let inputs = Inputs { frame, cfg, observed: &observed, points: &points, fans: &fans, cgm, options };
    let mut outcome = BacktestOutcome {
        schedule,
        engines: engines.clone(),
        scp_grid: cfg.scp_grid.clone(),
        scores: engines.iter().map(|g| (*g, Vec::new())).collect(),
        ledger: ProfitLedger::default(),
        engine_argmax: engines.iter().map(|g| (*g, [0; SUBPERIODS])).collect(),
        audit: LeakageAudit::default(),
        skips: Vec::new(),
        test_keys: 0,
        cgm: manifest,
    };

    for day in days(schedule.test_start, schedule.test_end) {
        let results: Vec<KeyOutcome> = (0..24u8)
            .into_par_iter()
            .map(|h| {
                let key = DeliveryKey::new(day, h);
                match frame.path_for(&key) {
                    Err(_) => KeyOutcome { key, path: None, engines: Vec::new() },
                    Ok(path) => {
                        let engines = engines
                            .par_iter()
                            .map(|&g| inputs.evaluate(key, g, &path).map_err(|e| (g, e)))
                            .collect();
                        KeyOutcome { key, path: Some(path), engines }
                    }
                }
            })
            .collect();
        for r in results {
            book(&mut outcome, r);
        }
    }
    Ok(outcome)
}

fn book(outcome: &mut BacktestOutcome, r: KeyOutcome) {
    outcome.test_keys += 1;
    let Some(path) = r.path else {
        outcome.ledger.skipped_keys += 1;
        outcome.skips.push(SkipRecord { key: r.key, engine: None, reason: "observed path incomplete".into() });
        return;
    };
    outcome.ledger.book_benchmarks(r.key, &path);
    let origin = r.key.forecast_origin();
    for res in r.engines {
        match res {
            Err((g, reason)) => outcome.skips.push(SkipRecord { key: r.key, engine: Some(g), reason }),
            Ok(e) => {
                outcome.audit.checked += 1;
                if e.used > origin {
                    outcome.audit.violations.push(LeakageRecord { key: r.key, engine: e.generator, used: e.used, origin });
                }
                let engine = e.generator.as_str().to_string();
                outcome.ledger.book_choice(r.key, &path, Strategy::Majority { engine: engine.clone() }, e.majority);
                outcome.engine_argmax.get_mut(&e.generator).expect("engine")[e.majority - 1] += 1;
                for (side, scp, j) in e.bands {
                    let s = Strategy::Band { engine: engine.clone(), side, scp_permille: scp_permille(scp) };
                    outcome.ledger.book_choice(r.key, &path, s, j);
                }
                outcome.scores.get_mut(&e.generator).expect("engine").push(e.scores);
            }
        }
    }
}

/// Scores and trades ensembles previously written with
/// [`RunOptions::ensemble_dir`]. Availability times are not stored with the
/// ensembles, so the leakage audit stays empty.
pub fn replay_ensembles(
    frame: &MarketFrame,
    dir: &Path,
    engines: &[Generator],
    scp_grid: &[f64],
) -> Result<BacktestOutcome, BacktestError> {
    let mut files: BTreeMap<DeliveryKey, Vec<(Generator, PathBuf)>> = BTreeMap::new();
    for g in engines {
        let sub = dir.join(g.as_str());
        if !sub.is_dir() {
            continue;
        }
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&sub)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.retain(|p| p.extension().is_some_and(|x| x == "bin"));
        entries.sort();
        for p in entries {
            let e = TrajectoryEnsemble::read_binary(&p)?;
            files.entry(e.key).or_default().push((*g, p));
        }
    }
    let (Some(first), Some(last)) = (files.keys().next(), files.keys().next_back()) else {
        return Err(BacktestError::InsufficientData(format!("no ensembles below {}", dir.display())));
    };
    let schedule = Schedule {
        test_start: first.date,
        test_end: last.date + Duration::days(1),
        point_start: first.date,
        fan_start: first.date,
    };
    let mut outcome = BacktestOutcome {
        schedule,
        engines: engines.to_vec(),
        scp_grid: scp_grid.to_vec(),
        scores: engines.iter().map(|g| (*g, Vec::new())).collect(),
        ledger: ProfitLedger::default(),
        engine_argmax: engines.iter().map(|g| (*g, [0; SUBPERIODS])).collect(),
        audit: LeakageAudit::default(),
        skips: Vec::new(),
        test_keys: 0,
        cgm: None,
    };
    for (key, paths) in files {
        let r = match frame.path_for(&key) {
            Err(_) => KeyOutcome { key, path: None, engines: Vec::new() },
            Ok(path) => {
                let engines = paths
                    .par_iter()
                    .map(|(g, p)| {
                        TrajectoryEnsemble::read_binary(p)
                            .map_err(|e| e.to_string())
                            .and_then(|e| evaluate_samples(&e, i64::MIN, &path, scp_grid))
                            .map_err(|m| (*g, m))
                    })
                    .collect();
                KeyOutcome { key, path: Some(path), engines }
            }
        };
        book(&mut outcome, r);
    }
    outcome.audit = LeakageAudit::default();
    Ok(outcome)
}
