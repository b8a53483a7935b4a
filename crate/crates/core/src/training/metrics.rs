use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::TrainMetrics;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,loss,val_error,wall_ms";

/// Append-only metrics CSV. A new file starts with a `#` line carrying the
/// config hash and seed, then the header.
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    pub fn open(path: &Path, config_hash: &str, seed: u64) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        if fresh {
            writeln!(file, "# config_hash={config_hash} seed={seed}\n{METRICS_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(MetricsWriter { path: path.to_path_buf(), file })
    }

    pub fn write(&mut self, m: &TrainMetrics) -> Result<()> {
        let val = m.val_error.map_or(String::new(), |v| format!("{v:.4}"));
        writeln!(self.file, "{},{:.6},{val},{}", m.step, m.loss, m.wall_ms).map_err(|e| Error::io(&self.path, e))
    }
}

/// Parses the rows of a metrics CSV as `(step, loss, val_error)`.
pub fn read_metrics(path: &Path) -> Result<Vec<(u64, f64, Option<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line == METRICS_HEADER || line.is_empty() {
            continue;
        }
        let bad = || Error::Parse { offset: i + 1, message: format!("{}: bad metrics row `{line}`", path.display()) };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let step = f[0].parse().map_err(|_| bad())?;
        let loss = f[1].parse().map_err(|_| bad())?;
        let val = if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad())?) };
        out.push((step, loss, val));
    }
    Ok(out)
}
