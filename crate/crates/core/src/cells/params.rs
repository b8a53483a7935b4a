//! Flat parameter vector with its binary mask, and the on-disk format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "JPRPARAM"
//! header_len   u32
//! header       header_len bytes of JSON (ParamFileHeader)
//! weights      param_count × f64
//! mask         ceil(param_count / 8) bytes, bit i of byte k is index 8k + i
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellSpec, Layout, LAYOUT_VERSION};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"JPRPARAM";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamFileHeader {
    pub layout_version: u32,
    pub spec: CellSpec,
    pub seed: u64,
    pub param_count: usize,
    pub retained: usize,
    /// Free-form provenance (config hash, criterion, ...). Sorted keys keep
    /// the encoding deterministic.
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

/// Parameters `w` with mask `c`; the effective parameters are `c ⊙ w`, and
/// `w` is kept at exactly zero wherever `c` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedParameterSet {
    spec: CellSpec,
    weights: Vec<f64>,
    mask: Vec<bool>,
    pub seed: u64,
}

impl MaskedParameterSet {
    /// Dense set (all-ones mask).
    pub fn dense(spec: CellSpec, weights: Vec<f64>, seed: u64) -> Result<Self> {
        if weights.len() != spec.param_count() {
            return Err(Error::Dim { what: "parameter vector", expected: spec.param_count(), actual: weights.len() });
        }
        let mask = vec![true; weights.len()];
        Ok(MaskedParameterSet { spec, weights, mask, seed })
    }

    pub fn spec(&self) -> &CellSpec {
        &self.spec
    }

    pub fn layout(&self) -> Layout {
        self.spec.layout()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Effective parameters `θ = c ⊙ w`.
    pub fn theta(&self) -> &[f64] {
        &self.weights
    }

    pub fn retained(&self) -> usize {
        self.mask.iter().filter(|&&c| c).count()
    }

    pub fn density(&self) -> f64 {
        self.retained() as f64 / self.len() as f64
    }

    /// Replaces the mask and zeroes every pruned weight.
    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.weights.len() {
            return Err(Error::Dim { what: "mask", expected: self.weights.len(), actual: mask.len() });
        }
        self.mask = mask;
        self.project();
        Ok(())
    }

    /// Overwrites the free values, then re-applies the mask.
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::Dim { what: "parameter vector", expected: self.weights.len(), actual: weights.len() });
        }
        self.weights = weights;
        self.project();
        Ok(())
    }

    /// `w ← c ⊙ w`.
    pub fn project(&mut self) {
        for (w, &c) in self.weights.iter_mut().zip(&self.mask) {
            if !c {
                *w = 0.0;
            }
        }
    }

    /// True when every pruned index holds an exact zero.
    pub fn mask_respected(&self) -> bool {
        self.weights.iter().zip(&self.mask).all(|(&w, &c)| c || w == 0.0)
    }

    pub fn header(&self, meta: BTreeMap<String, serde_json::Value>) -> ParamFileHeader {
        ParamFileHeader {
            layout_version: LAYOUT_VERSION,
            spec: self.spec,
            seed: self.seed,
            param_count: self.len(),
            retained: self.retained(),
            meta,
        }
    }

    pub fn to_bytes(&self, meta: BTreeMap<String, serde_json::Value>) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header(meta))?;
        let mut out = Vec::with_capacity(12 + header.len() + self.len() * 8 + self.len().div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&pack_bits(&self.mask));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, ParamFileHeader)> {
        let take = |start: usize, len: usize| -> Result<&[u8]> {
            bytes.get(start..start + len).ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("truncated parameter file: need {} bytes, have {}", start + len, bytes.len()),
            })
        };
        if take(0, 8)? != MAGIC {
            return Err(Error::Parse { offset: 0, message: "bad magic, not a parameter file".into() });
        }
        let header_len = u32::from_le_bytes(take(8, 4)?.try_into().expect("4 bytes")) as usize;
        let header: ParamFileHeader = serde_json::from_slice(take(12, header_len)?)?;
        if header.layout_version != LAYOUT_VERSION {
            return Err(Error::Incompatible(format!(
                "layout version {} (this build reads {LAYOUT_VERSION})",
                header.layout_version
            )));
        }
        let p = header.spec.param_count();
        if header.param_count != p {
            return Err(Error::Incompatible(format!(
                "header declares {} parameters but {:?} has {p}",
                header.param_count, header.spec
            )));
        }
        let mut offset = 12 + header_len;
        let weights = take(offset, p * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        offset += p * 8;
        let mask = unpack_bits(take(offset, p.div_ceil(8))?, p);
        if offset + p.div_ceil(8) != bytes.len() {
            return Err(Error::Parse { offset: offset + p.div_ceil(8), message: "trailing bytes".into() });
        }
        let set = MaskedParameterSet { spec: header.spec, weights, mask, seed: header.seed };
        if !set.mask_respected() {
            return Err(Error::Parse { offset, message: "nonzero weight stored at a pruned index".into() });
        }
        if set.retained() != header.retained {
            return Err(Error::Parse { offset, message: "mask cardinality disagrees with header".into() });
        }
        Ok((set, header))
    }

    pub fn save(&self, path: &Path, meta: BTreeMap<String, serde_json::Value>) -> Result<()> {
        std::fs::write(path, self.to_bytes(meta)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, ParamFileHeader)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}
