//! Window shards: a JSON header followed by the window values as f32.
//!
//! Window `i` occupies payload values `[i·W·D, (i+1)·W·D)` in `[W, D]`
//! row-major order. See [`crate::binfmt`] for the byte layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::window::Window;
use super::DataError;
use crate::binfmt;

pub const SHARD_MAGIC: &[u8; 8] = b"PTLWIN\0\0";
pub const SHARD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardHeader {
    pub version: u32,
    pub window_len: usize,
    pub channels: usize,
    pub channel_names: Vec<String>,
    pub classes: Vec<String>,
    pub count: usize,
    pub labels: Vec<usize>,
    pub clip_ids: Vec<String>,
    /// File name of the normalization statistics applied to these windows.
    #[serde(default)]
    pub stats: Option<String>,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowShard {
    pub header: ShardHeader,
    pub windows: Vec<Window>,
}

impl WindowShard {
    pub fn new(
        windows: Vec<Window>,
        window_len: usize,
        channel_names: Vec<String>,
        classes: Vec<String>,
        rate_hz: f64,
        stats: Option<String>,
    ) -> Result<Self, DataError> {
        let channels = channel_names.len();
        if let Some(w) = windows.iter().find(|w| w.window_len != window_len || w.channels != channels) {
            return Err(DataError::Window(format!(
                "window from `{}` has shape [{}, {}], shard expects [{window_len}, {channels}]",
                w.clip_id, w.window_len, w.channels
            )));
        }
        let header = ShardHeader {
            version: SHARD_VERSION,
            window_len,
            channels,
            channel_names,
            classes,
            count: windows.len(),
            labels: windows.iter().map(|w| w.label).collect(),
            clip_ids: windows.iter().map(|w| w.clip_id.clone()).collect(),
            stats,
            rate_hz,
        };
        Ok(Self { header, windows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("shard header serializes");
        let payload: Vec<f32> = self.windows.iter().flat_map(|w| w.values.iter().map(|&v| v as f32)).collect();
        binfmt::encode(SHARD_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let (header, payload) = binfmt::split(SHARD_MAGIC, bytes)?;
        let header: ShardHeader =
            serde_json::from_slice(header).map_err(|e| binfmt::FormatError::CorruptHeader(e.to_string()))?;
        if header.version != SHARD_VERSION {
            return Err(DataError::Format(binfmt::FormatError::CorruptHeader(format!(
                "unsupported shard version {}",
                header.version
            ))));
        }
        if header.labels.len() != header.count
            || header.clip_ids.len() != header.count
            || header.channel_names.len() != header.channels
        {
            return Err(binfmt::FormatError::CorruptHeader("header arrays disagree with counts".into()).into());
        }
        if let Some(&bad) = header.labels.iter().find(|&&l| l >= header.classes.len()) {
            return Err(DataError::LabelOutOfRange { label: bad, classes: header.classes.len() });
        }
        let per = header.window_len * header.channels;
        let values = binfmt::decode_payload(payload, per * header.count)?;
        let windows = values
            .chunks_exact(per.max(1))
            .take(header.count)
            .zip(header.labels.iter().zip(&header.clip_ids))
            .map(|(chunk, (&label, id))| Window {
                values: chunk.iter().map(|&v| v as f64).collect(),
                window_len: header.window_len,
                channels: header.channels,
                label,
                clip_id: id.clone(),
            })
            .collect();
        Ok(Self { header, windows })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }
}
