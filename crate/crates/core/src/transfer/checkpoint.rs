//! Checkpoint files: a JSON header with the graph, a tensor directory and
//! training metadata, followed by every parameter as f32 in directory order.
//! See [`crate::binfmt`] for the byte layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TransferError;
use crate::arch::{check_params, NetworkGraph};
use crate::binfmt::{self, FormatError};
use crate::nn::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PTLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    /// Tag of the dataset the weights were trained on.
    pub source: String,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    /// File name of the normalization statistics used for training inputs.
    pub stats: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub key: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    graph: NetworkGraph,
    tensors: Vec<TensorEntry>,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub graph: NetworkGraph,
    pub params: ParamSet<f32>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(graph: NetworkGraph, params: ParamSet<f32>, meta: CheckpointMeta) -> Result<Self, TransferError> {
        check_params(&graph, &params)?;
        Ok(Self { graph, params, meta })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut payload = Vec::with_capacity(self.params.num_elements());
        for (key, t) in self.params.iter() {
            tensors.push(TensorEntry { key: key.clone(), shape: t.shape().to_vec(), offset });
            offset += t.len();
            payload.extend_from_slice(t.data());
        }
        let header =
            Header { version: CHECKPOINT_VERSION, graph: self.graph.clone(), tensors, meta: self.meta.clone() };
        let header = serde_json::to_vec(&header).expect("checkpoint header serializes");
        binfmt::encode(CHECKPOINT_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TransferError> {
        let (header, payload) = binfmt::split(CHECKPOINT_MAGIC, bytes)?;
        let version = serde_json::from_slice::<serde_json::Value>(header)
            .map_err(|e| FormatError::CorruptHeader(e.to_string()))?
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| FormatError::CorruptHeader("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(TransferError::UnknownVersion(version));
        }
        let header: Header = serde_json::from_slice(header).map_err(|e| FormatError::CorruptHeader(e.to_string()))?;

        let expected = header.graph.param_shapes()?;
        if expected.len() != header.tensors.len() {
            return Err(FormatError::CorruptHeader(format!(
                "directory lists {} tensors, graph has {}",
                header.tensors.len(),
                expected.len()
            ))
            .into());
        }
        let mut offset = 0;
        for ((key, shape), entry) in expected.iter().zip(&header.tensors) {
            if *key != entry.key {
                return Err(
                    FormatError::CorruptHeader(format!("expected tensor `{key}`, found `{}`", entry.key)).into()
                );
            }
            if *shape != entry.shape {
                return Err(TransferError::ShapeMismatch {
                    tensor: key.clone(),
                    expected: shape.clone(),
                    found: entry.shape.clone(),
                });
            }
            if entry.offset != offset {
                return Err(
                    FormatError::CorruptHeader(format!("tensor `{key}` offset {} != {offset}", entry.offset)).into()
                );
            }
            offset += shape.iter().product::<usize>();
        }

        let values = binfmt::decode_payload(payload, offset)?;
        let params = header
            .tensors
            .iter()
            .map(|e| {
                let n: usize = e.shape.iter().product();
                Tensor::from_vec(&e.shape, values[e.offset..e.offset + n].to_vec()).map(|t| (e.key.clone(), t))
            })
            .collect::<Result<ParamSet<f32>, _>>()?;
        Ok(Self { graph: header.graph, params, meta: header.meta })
    }
}

pub fn save_checkpoint(
    graph: &NetworkGraph,
    params: &ParamSet<f32>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), TransferError> {
    let ckpt = Checkpoint::new(graph.clone(), params.clone(), meta.clone())?;
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| TransferError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TransferError> {
    let bytes = std::fs::read(path).map_err(|e| TransferError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
