//! Rolling-window backtest: configuration, window schedule, leakage audit
//! and report emission.

pub mod config;
pub mod report;
pub mod runner;

use thiserror::Error;

pub use config::BacktestConfig;
pub use report::{version_string, write_reports, write_score_reports, write_summary, write_trading_reports, RunMeta};
pub use runner::{
    cgm_training_data, ensemble_file, load_cgm, replay_ensembles, run_backtest, train_cgm, BacktestOutcome, CgmManifest, CgmSource, LeakageAudit,
    RunOptions, Schedule, SkipRecord,
};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Cgm(#[from] crate::cgm::CgmError),
    #[error(transparent)]
    Sampler(#[from] crate::path_samplers::SamplerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
