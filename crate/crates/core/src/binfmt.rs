//! Shared container layout for window shards and checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       8     magic (ASCII, zero padded)
//! 8       8     header length H, u64 little-endian
//! 16      H     UTF-8 JSON header
//! 16+H    4·N   payload, N little-endian IEEE-754 binary32 values
//! ```
//!
//! The header states how many payload values follow; trailing bytes beyond
//! that are rejected as corruption.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated blob: expected {expected} payload bytes, found {found}")]
    TruncatedBlob { expected: usize, found: usize },
    #[error("trailing data: {0} unexpected bytes after payload")]
    TrailingData(usize),
}

pub fn encode(magic: &[u8; 8], header: &[u8], payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + header.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a container into its header bytes and the raw payload bytes.
pub fn split<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8]), FormatError> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(FormatError::BadMagic { expected: String::from_utf8_lossy(magic).trim_end_matches('\0').into() });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| FormatError::CorruptHeader(format!("header length {len} exceeds file size")))?;
    Ok((&bytes[16..end], &bytes[end..]))
}

/// Decodes exactly `count` f32 values from the payload bytes.
pub fn decode_payload(payload: &[u8], count: usize) -> Result<Vec<f32>, FormatError> {
    let expected = count * 4;
    if payload.len() < expected {
        return Err(FormatError::TruncatedBlob { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingData(payload.len() - expected));
    }
    Ok(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}
