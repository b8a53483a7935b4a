use jacprune_autodiff::Tensor;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Gaussian stand-in for the data distribution, used to estimate `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxDistribution {
    pub mean: f64,
    pub std: f64,
    pub seq_len: usize,
    pub dim: usize,
}

impl ApproxDistribution {
    /// `N(0, 0.1)` sequences of the given shape (0.1 read as a std).
    pub fn small_normal(seq_len: usize, dim: usize) -> Self {
        ApproxDistribution { mean: 0.0, std: 0.1, seq_len, dim }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::invalid(format!("approximate distribution needs std > 0, got {}", self.std)));
        }
        if self.seq_len == 0 || self.dim == 0 {
            return Err(Error::invalid("approximate distribution needs positive seq_len and dim"));
        }
        Ok(())
    }
}

/// `count` i.i.d. sequences from `dist`, deterministic in `seed`.
pub fn sample_approx(dist: &ApproxDistribution, count: usize, seed: u64) -> Result<Batch> {
    dist.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let normal = Normal::new(dist.mean, dist.std).expect("validated");
    let mut rng = stream(seed, Stream::Approx);
    let xs = (0..dist.seq_len)
        .map(|_| Tensor::matrix(count, dist.dim, (0..count * dist.dim).map(|_| normal.sample(&mut rng)).collect()))
        .collect();
    Ok(Batch { xs, labels: None })
}
