//! Canonical clip files, manifests, windowing, splits and shards.

mod clip;
mod manifest;
mod pipeline;
mod shard;
mod split;
mod window;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use clip::{
    load_all, load_clip, read_clip_csv, save_clip, write_clip_csv, ClipColumns, PoseClip, LABEL_COLUMN, TIME_COLUMN,
};
pub use manifest::{BranchLayout, ClipEntry, DatasetManifest, Limb, LimbMap};
pub use pipeline::{
    build_windows_from_clips, build_windows_pipeline, transform_clip, ChannelNorm, NormStats, PipelineConfig,
    SignalMode, WindowedDataset,
};
pub use shard::{ShardHeader, WindowShard, SHARD_MAGIC, SHARD_VERSION};
pub use split::{split_clips, subsample_fraction, subsample_indices, SplitFractions, SplitIndices};
pub use window::{majority_label, segment_windows, window_count, Window, WindowSpec};

use crate::binfmt::FormatError;
use crate::signal::SignalError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("{path}: {inner}")]
    InFile { path: PathBuf, inner: Box<DataError> },
    #[error("no samples")]
    NoSamples,
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("window: {0}")]
    Window(String),
    #[error("split: {0}")]
    Split(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        DataError::InFile { path: path.to_path_buf(), inner: Box::new(self) }
    }

    /// Strips file context.
    pub fn root(&self) -> &DataError {
        match self {
            DataError::InFile { inner, .. } => inner.root(),
            e => e,
        }
    }
}
