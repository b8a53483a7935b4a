//! IDX container format (the MNIST distribution format), optionally gzipped.
//!
//! Header: two zero bytes, a type byte (0x08 = unsigned byte), a rank byte,
//! then `rank` big-endian u32 dimensions. The payload is row-major.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    /// Pixel bytes mapped to `[0, 1]` by `/255`.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.starts_with(&[0x1f, 0x8b])
}

/// Parses an unsigned-byte IDX array. Gzip input is detected and inflated.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if is_gzip(bytes) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| Error::Parse { offset: 0, message: format!("gzip: {e}") })?;
        return parse_idx(&raw);
    }
    if bytes.len() < 4 {
        return Err(Error::Parse { offset: 0, message: format!("header needs 4 bytes, got {}", bytes.len()) });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if magic >> 8 != 0x08 || bytes[3] == 0 {
        return Err(Error::Parse { offset: 0, message: format!("bad IDX magic {magic:#010x}") });
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated header: expected {header} bytes, got {}", bytes.len()),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(Error::Parse {
            offset: bytes.len().min(expected),
            message: format!("payload length mismatch: expected {expected} bytes, got {}", bytes.len()),
        });
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

pub fn load_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse { offset, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}
