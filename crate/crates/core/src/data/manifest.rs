use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_idx, IdxArray};
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Which files a dataset came from and how it was split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub files: Vec<ManifestFile>,
    pub subset: Option<usize>,
    pub train: usize,
    pub validation: usize,
}

impl DatasetManifest {
    /// Reads and parses an IDX file, recording its checksum.
    pub fn read_idx(&mut self, path: &Path) -> Result<IdxArray> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.files.push(ManifestFile { path: path.to_path_buf(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        parse_idx(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}
