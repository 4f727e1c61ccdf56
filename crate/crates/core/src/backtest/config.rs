//! Backtest configuration: TOML file plus dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BacktestError;
use crate::cgm::{LossKind, NetworkConfig, TrainConfig};
use crate::path_samplers::Generator;
use crate::point_forecast::{LambdaRule, LearConfig, DEFAULT_GRID_POINTS};

/// Calibration window lengths in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub lasso_days: usize,
    pub qr_days: usize,
    pub copula_days: usize,
    pub bootstrap_days: usize,
    /// Fixed training period of the generator, ending at the test start.
    pub cgm_days: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { lasso_days: 396, qr_days: 120, copula_days: 120, bootstrap_days: 240, cgm_days: 630 }
    }
}

/// Ensemble sizes per engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub lqc: usize,
    pub bootstrap: usize,
    pub cgm_members: usize,
    pub cgm_per_member: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { lqc: 10_000, bootstrap: 10_000, cgm_members: 10, cgm_per_member: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearSettings {
    pub grid_points: usize,
    /// Overrides the AIC search with a fixed penalty.
    pub fixed_lambda: Option<f64>,
    pub transform_targets: bool,
}

impl Default for LearSettings {
    fn default() -> Self {
        Self { grid_points: DEFAULT_GRID_POINTS, fixed_lambda: None, transform_targets: true }
    }
}

impl LearSettings {
    pub fn lear_config(&self) -> LearConfig {
        let lambda = match self.fixed_lambda {
            Some(l) => LambdaRule::Fixed(l),
            None => LambdaRule::Aic { grid_points: self.grid_points },
        };
        LearConfig { lambda, transform_targets: self.transform_targets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgmSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub m_train: usize,
    pub validation_fraction: f64,
    pub max_epochs: usize,
    /// Weight of the trading term; absent means the plain energy-score loss.
    pub omega: Option<f64>,
    pub half_widths: bool,
    /// Directory of member checkpoints written by `train-cgm`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for CgmSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            patience: t.patience,
            m_train: t.m_train,
            validation_fraction: t.validation_fraction,
            max_epochs: t.max_epochs,
            omega: None,
            half_widths: false,
            checkpoint_dir: None,
        }
    }
}

impl CgmSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let network = if self.half_widths { NetworkConfig::default().halved() } else { NetworkConfig::default() };
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patience: self.patience,
            m_train: self.m_train,
            validation_fraction: self.validation_fraction,
            max_epochs: self.max_epochs,
            loss: match self.omega {
                Some(omega) => LossKind::Custom { omega },
                None => LossKind::EnergyScore,
            },
            seed,
            network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub seed: u64,
    pub engines: Vec<String>,
    /// Market CSV; the CLI may supply it instead.
    pub data: Option<PathBuf>,
    /// First test day; defaults to the last `test_days` days of the data.
    pub test_start: Option<NaiveDate>,
    pub test_days: usize,
    pub scp_grid: Vec<f64>,
    pub windows: WindowConfig,
    pub samples: SampleConfig,
    pub lear: LearSettings,
    pub cgm: CgmSettings,
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_scp_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).map(|v| (v * 100.0).round() / 100.0).collect()
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            engines: vec!["BOOTSTRAP".into(), "LQC".into(), "CGM".into()],
            data: None,
            test_start: None,
            test_days: 200,
            scp_grid: default_scp_grid(),
            windows: WindowConfig::default(),
            samples: SampleConfig::default(),
            lear: LearSettings::default(),
            cgm: CgmSettings::default(),
        }
    }
}

impl BacktestConfig {
    /// Desk-scale setup for 60 history days followed by 20 test days.
    pub fn desk() -> Self {
        Self {
            test_days: 20,
            windows: WindowConfig { lasso_days: 28, qr_days: 5, copula_days: 20, bootstrap_days: 20, cgm_days: 53 },
            samples: SampleConfig { lqc: 1000, bootstrap: 1000, cgm_members: 2, cgm_per_member: 500 },
            cgm: CgmSettings { half_widths: true, max_epochs: 60, batch_size: 256, learning_rate: 1e-3, ..CgmSettings::default() },
            ..Self::default()
        }
    }

    /// Reads `path` (if any) over the defaults, then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, BacktestError> {
        let base = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_str(&base, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, BacktestError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| BacktestError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        dates_to_strings(&mut table);
        let cfg: Self = table.try_into().map_err(|e| BacktestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Requested engines in canonical order, duplicates removed.
    pub fn generators(&self) -> Result<Vec<Generator>, BacktestError> {
        let mut out = Vec::new();
        for name in &self.engines {
            let g = Generator::parse(name).ok_or_else(|| BacktestError::Config(format!("unknown engine {name:?}")))?;
            if !out.contains(&g) {
                out.push(g);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        self.generators()?;
        let w = &self.windows;
        let windows = [w.lasso_days, w.qr_days, w.copula_days, w.bootstrap_days, w.cgm_days];
        if windows.contains(&0) {
            return Err(BacktestError::Config("window lengths must be positive".into()));
        }
        if self.test_days == 0 {
            return Err(BacktestError::Config("test_days must be positive".into()));
        }
        let s = &self.samples;
        if [s.lqc, s.bootstrap, s.cgm_members, s.cgm_per_member].contains(&0) {
            return Err(BacktestError::Config("ensemble sizes must be positive".into()));
        }
        if self.scp_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(BacktestError::Config("SCP values must lie in (0, 1)".into()));
        }
        self.cgm.train_config(self.seed).validate().map_err(|e| BacktestError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Bare TOML dates become strings so they deserialize as calendar dates.
fn dates_to_strings(table: &mut toml::Table) {
    for (_, v) in table.iter_mut() {
        match v {
            toml::Value::Datetime(d) => *v = toml::Value::String(d.to_string()),
            toml::Value::Table(t) => dates_to_strings(t),
            _ => {}
        }
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), BacktestError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| BacktestError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(BacktestError::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| BacktestError::Config(format!("override {key:?} descends into a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
