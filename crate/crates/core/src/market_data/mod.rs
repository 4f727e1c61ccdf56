//! Market data: delivery calendar, CSV ingestion, feature construction and
//! normalization.

pub mod calendar;
pub mod features;
pub mod frame;
pub mod ingest;
pub mod scaling;

use thiserror::Error;

pub use calendar::{DeliveryKey, FORECAST_LEAD_MINUTES, SUBPERIODS, VWAP_COLUMNS};
pub use features::{build_cgm_inputs, build_lear_features, CellReader, CgmInputs, FeatureSchema, FeatureVector};
pub use frame::{duration_weighted_id3, HourRecord, MarketFrame, PricePath, Series};
pub use ingest::{ingest, write_csv, SchemaConfig};
pub use scaling::{arsinh, inverse_arsinh, RobustScaler, ZScaler};

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate delivery key {key} at line {line}")]
    DuplicateKey { key: DeliveryKey, line: u64 },
    #[error("timestamps not increasing at {key} (line {line})")]
    NonMonotoneTimestamps { key: DeliveryKey, line: u64 },
    #[error("insufficient history for {key}: missing {}", cells.join(", "))]
    InsufficientHistory { key: DeliveryKey, cells: Vec<String> },
    #[error("leakage: {series} of {cell} available at {available_at} after cutoff {cutoff} for {target}")]
    LeakageViolation { target: DeliveryKey, cell: DeliveryKey, series: String, available_at: i64, cutoff: i64 },
    #[error("observed path of {key} is incomplete")]
    MissingPath { key: DeliveryKey },
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
