//! Datasets: IDX/MNIST ingestion, row-by-row sequentialization, the
//! approximate input distribution used for `γ`, and small synthetic tasks.

mod approx;
mod idx;
mod manifest;
mod synthetic;

pub use approx::{sample_approx, ApproxDistribution};
pub use idx::{load_idx, parse_idx, IdxArray, IMAGES_MAGIC, LABELS_MAGIC};
pub use manifest::{sha256_hex, DatasetManifest, ManifestFile};
pub use synthetic::{synthetic_task, SyntheticKind, SyntheticSizes};

use std::path::{Path, PathBuf};

use jacprune_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides the configured dataset root.
pub const DATA_ROOT_ENV: &str = "JACPRUNE_DATA_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Full,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// One class label per sequence, read at the final step.
    Class { labels: Vec<usize>, num_classes: usize },
    /// A target token sequence per sequence (copy-memory).
    Sequence { tokens: Vec<Vec<usize>>, vocab: usize },
    None,
}

/// `M` sequences of `S` steps of `D` features, stored `[M, S, D]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub seq_len: usize,
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Targets,
    pub split: Split,
    /// Divisor applied to the raw inputs (255 for pixel bytes, 1 otherwise).
    pub scale: f64,
}

/// A minibatch laid out per step: `xs[t]` is `[B, D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub xs: Vec<Tensor>,
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.xs.first().map_or(0, |x| x.dims2().0)
    }

    pub fn seq_len(&self) -> usize {
        self.xs.len()
    }

    /// Rows `start..start+len` of every step.
    pub fn slice(&self, start: usize, len: usize) -> Batch {
        let xs = self
            .xs
            .iter()
            .map(|x| {
                let d = x.dims2().1;
                Tensor::matrix(len, d, x.data()[start * d..(start + len) * d].to_vec())
            })
            .collect();
        Batch { xs, labels: self.labels.as_ref().map(|l| l[start..start + len].to_vec()) }
    }
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.inputs.len() / (self.seq_len * self.dim).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        let w = self.seq_len * self.dim;
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Class { labels, .. } => Some(labels),
            _ => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.targets {
            Targets::Class { num_classes, .. } => Some(num_classes),
            _ => None,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let (s, d) = (self.seq_len, self.dim);
        let xs = (0..s)
            .map(|t| {
                let mut data = Vec::with_capacity(indices.len() * d);
                for &i in indices {
                    data.extend_from_slice(&self.sequence(i)[t * d..(t + 1) * d]);
                }
                Tensor::matrix(indices.len(), d, data)
            })
            .collect();
        let labels = self.labels().map(|l| indices.iter().map(|&i| l[i]).collect());
        Batch { xs, labels }
    }

    /// The first `count` sequences.
    pub fn head(&self, count: usize) -> SequenceDataset {
        self.select(0..count.min(self.len()), self.split)
    }

    fn select(&self, range: std::ops::Range<usize>, split: Split) -> SequenceDataset {
        let w = self.seq_len * self.dim;
        let targets = match &self.targets {
            Targets::Class { labels, num_classes } => {
                Targets::Class { labels: labels[range.clone()].to_vec(), num_classes: *num_classes }
            }
            Targets::Sequence { tokens, vocab } => {
                Targets::Sequence { tokens: tokens[range.clone()].to_vec(), vocab: *vocab }
            }
            Targets::None => Targets::None,
        };
        SequenceDataset {
            seq_len: self.seq_len,
            dim: self.dim,
            inputs: self.inputs[range.start * w..range.end * w].to_vec(),
            targets,
            split,
            scale: self.scale,
        }
    }

    /// Disjoint, exhaustive split holding out the last `val_count` sequences.
    pub fn split_holdout(&self, val_count: usize) -> Result<(SequenceDataset, SequenceDataset)> {
        let m = self.len();
        if val_count >= m {
            return Err(Error::invalid(format!("cannot hold out {val_count} of {m} sequences")));
        }
        Ok((self.select(0..m - val_count, Split::Train), self.select(m - val_count..m, Split::Validation)))
    }
}

/// Row-by-row sequential MNIST: image `[28, 28]` becomes 28 steps of 28
/// pixels, pixel `(r, c)` landing at step `r`, feature `c`.
pub fn sequentialize_mnist(images: &IdxArray, labels: &IdxArray) -> Result<SequenceDataset> {
    if images.dims.len() != 3 || images.dims[1] != 28 || images.dims[2] != 28 {
        return Err(Error::invalid(format!("expected [M, 28, 28] images, got {:?}", images.dims)));
    }
    if labels.dims.len() != 1 || labels.dims[0] != images.dims[0] {
        return Err(Error::Dim { what: "label count", expected: images.dims[0], actual: labels.data.len() });
    }
    if let Some(&bad) = labels.data.iter().find(|&&l| l > 9) {
        return Err(Error::invalid(format!("label {bad} out of range 0..10")));
    }
    Ok(SequenceDataset {
        seq_len: 28,
        dim: 28,
        inputs: images.to_unit_f64(),
        targets: Targets::Class { labels: labels.data.iter().map(|&l| l as usize).collect(), num_classes: 10 },
        split: Split::Full,
        scale: 255.0,
    })
}

/// Candidate file names inside an MNIST directory, first match wins.
const IMAGE_NAMES: [&str; 4] =
    ["images-idx3-ubyte.gz", "images-idx3-ubyte", "train-images-idx3-ubyte.gz", "train-images-idx3-ubyte"];
const LABEL_NAMES: [&str; 4] =
    ["labels-idx1-ubyte.gz", "labels-idx1-ubyte", "train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte"];

fn find_file(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::io(dir.join(names[0]), std::io::ErrorKind::NotFound.into()))
}

/// Resolves `configured` against [`DATA_ROOT_ENV`] when the variable is set.
pub fn resolve_root(configured: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if configured.is_relative() => PathBuf::from(root).join(configured),
        _ => configured.to_path_buf(),
    }
}

/// Loads sequential MNIST from a directory holding an images/labels IDX pair.
pub fn load_mnist(dir: &Path) -> Result<(SequenceDataset, DatasetManifest)> {
    let image_path = find_file(dir, &IMAGE_NAMES)?;
    let label_path = find_file(dir, &LABEL_NAMES)?;
    let mut manifest = DatasetManifest::default();
    let images = manifest.read_idx(&image_path)?;
    let labels = manifest.read_idx(&label_path)?;
    Ok((sequentialize_mnist(&images, &labels)?, manifest))
}
