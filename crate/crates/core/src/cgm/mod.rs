//! Conditional generative model: Gaussian latent noise scaled by an
//! input-dependent vector, mapped with the conditioning features to price
//! paths, and trained on a scoring-rule loss.

pub mod checkpoint;
pub mod ensemble;
pub mod loss;
pub mod network;
pub mod nn;
pub mod train;

use thiserror::Error;

use crate::scoring::ScoringError;

pub use ensemble::CgmEnsemble;
pub use loss::LossKind;
pub use network::{Conditioning, GeneratorNetwork, NetworkConfig};
pub use train::{train, CgmDataset, TrainConfig, TrainedCgm};

#[derive(Debug, Error)]
pub enum CgmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("ensemble member {0} is untrained")]
    UntrainedMember(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
