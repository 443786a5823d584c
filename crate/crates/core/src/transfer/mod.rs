//! Checkpoints, convolutional-layer transplantation, fine-tuning and the
//! transfer experiment grid.

mod checkpoint;
mod matrix;
mod transplant;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use matrix::{
    run_transfer_matrix, write_results_csv, CellSummary, MatrixConfig, RunRecord, TransferMatrix, TransferSummary,
};
pub use transplant::{fine_tune, transplant, FineTuneReport, TargetData, TransferPlan, Transplanted};

use crate::arch::ArchError;
use crate::binfmt::FormatError;
use crate::dataio::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("unknown checkpoint version {0}")]
    UnknownVersion(u64),
    #[error("shape mismatch for tensor `{tensor}`: graph expects {expected:?}, file has {found:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("cannot transplant `{layer}`: source shape {source_shape:?}, target shape {target_shape:?}")]
    LayerMismatch { layer: String, source_shape: Vec<usize>, target_shape: Vec<usize> },
    #[error("transfer plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl TransferError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TransferError::Io { path: path.to_path_buf(), source }
    }
}
