use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::svd_small;
use crate::cells::{temporal_jacobians, unroll, CellSpec};
use crate::data::Batch;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Scan `J_t` for `t = S−1` down to `S−horizon`.
    pub horizon: usize,
    pub bin_width: f64,
    pub range_max: f64,
    /// Singular values below this count as near zero.
    pub near_zero: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { horizon: 4, bin_width: 0.05, range_max: 2.0, near_zero: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub range_max: f64,
    /// `range_max / bin_width` regular bins followed by one overflow bin.
    pub counts: Vec<usize>,
}

impl Histogram {
    fn new(bin_width: f64, range_max: f64) -> Self {
        let bins = (range_max / bin_width).round() as usize;
        Histogram { bin_width, range_max, counts: vec![0; bins + 1] }
    }

    fn add(&mut self, x: f64) {
        let bins = self.counts.len() - 1;
        let i = if x >= self.range_max { bins } else { ((x / self.bin_width).floor() as usize).min(bins - 1) };
        self.counts[i] += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub sequence: usize,
    /// The Jacobian is `∂h^(t+1)/∂h^(t)`.
    pub t: usize,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub count: usize,
    pub mean_sigma: f64,
    pub frac_near_zero: f64,
    pub near_zero: f64,
    /// `mean over entries of Σσ² / N`.
    pub chi: f64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    pub summary: SpectrumSummary,
    pub step: Option<u64>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

/// Exact temporal Jacobians of every sequence in `batch` over the last
/// `horizon` transitions, and their singular values.
pub fn spectrum_scan(spec: &CellSpec, theta: &[f64], batch: &Batch, opts: &ScanOptions) -> Result<SpectrumReport> {
    let s = batch.seq_len();
    if opts.horizon == 0 || opts.horizon >= s {
        return Err(Error::invalid(format!("scan horizon {} must lie in 1..{s}", opts.horizon)));
    }
    if !(opts.bin_width > 0.0 && opts.range_max > opts.bin_width) {
        return Err(Error::invalid("histogram needs 0 < bin_width < range_max"));
    }
    let n = spec.hidden_dim;
    let states = unroll(spec, theta, &batch.xs)?;
    let mut entries = Vec::with_capacity(batch.size() * opts.horizon);
    for u in 1..=opts.horizon {
        let t = s - u;
        let js = temporal_jacobians(spec, theta, &batch.xs[t], &states[t - 1])?;
        for (b, j) in js.iter().enumerate() {
            entries.push(SpectrumEntry { sequence: b, t, sigma: svd_small(j)?.sigma });
        }
    }
    entries.sort_by_key(|e| (e.sequence, e.t));
    let mut hist = Histogram::new(opts.bin_width, opts.range_max);
    let (mut total, mut near, mut sq) = (0.0, 0usize, 0.0);
    let count = entries.len() * n;
    for e in &entries {
        for &x in &e.sigma {
            hist.add(x);
            total += x;
            sq += x * x;
            near += usize::from(x < opts.near_zero);
        }
    }
    let summary = SpectrumSummary {
        count,
        mean_sigma: total / count as f64,
        frac_near_zero: near as f64 / count as f64,
        near_zero: opts.near_zero,
        chi: sq / count as f64,
        histogram: hist,
    };
    Ok(SpectrumReport { entries, summary, step: None, seed: None, config_hash: None })
}

impl SpectrumReport {
    /// `step,sequence,t,i,sigma` rows, preceded by a `#` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# config_hash={} seed={}",
            self.config_hash.as_deref().unwrap_or("-"),
            self.seed.map_or("-".to_string(), |s| s.to_string())
        );
        out.push_str("step,sequence,t,i,sigma\n");
        let step = self.step.unwrap_or(0);
        for e in &self.entries {
            for (i, s) in e.sigma.iter().enumerate() {
                let _ = writeln!(out, "{step},{},{},{i},{s:e}", e.sequence, e.t);
            }
        }
        out
    }

    /// Summary and metadata only; per-entry values go to the CSV.
    pub fn summary_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "summary": self.summary,
            "step": self.step,
            "seed": self.seed,
            "config_hash": self.config_hash,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}
