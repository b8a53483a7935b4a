use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{BlockKind, CellSpec, MaskedParameterSet};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Parameter initialization. `Normal.std` is a standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    Normal { mean: f64, std: f64 },
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` per weight matrix; biases
    /// and peepholes start at zero.
    Glorot,
    Uniform { low: f64, high: f64 },
    StandardNormal,
}

impl InitScheme {
    /// `N(0, 0.1)`, read as standard deviation 0.1.
    pub const SMALL_NORMAL: InitScheme = InitScheme::Normal { mean: 0.0, std: 0.1 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Normal { std, .. } if !(std > 0.0 && std.is_finite()) => {
                Err(Error::invalid(format!("normal init needs std > 0, got {std}")))
            }
            InitScheme::Uniform { low, high } if !(low < high) => {
                Err(Error::invalid(format!("uniform init needs low < high, got [{low}, {high})")))
            }
            _ => Ok(()),
        }
    }

    /// Glorot bound for a `[fan_in, fan_out]` matrix.
    pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

/// Fresh dense parameters, deterministic in `seed`.
pub fn initialize(spec: &CellSpec, scheme: InitScheme, seed: u64) -> Result<MaskedParameterSet> {
    spec.validate()?;
    scheme.validate()?;
    let layout = spec.layout();
    let mut rng = stream(seed, Stream::Init);
    let mut w = vec![0.0; layout.len()];
    for block in &layout.blocks {
        let dst = &mut w[block.offset..block.offset + block.len];
        match scheme {
            InitScheme::Normal { mean, std } => fill(dst, &mut rng, Normal::new(mean, std).expect("validated")),
            InitScheme::StandardNormal => fill(dst, &mut rng, Normal::new(0.0, 1.0).expect("unit normal")),
            InitScheme::Uniform { low, high } => fill(dst, &mut rng, Uniform::new(low, high).expect("validated")),
            InitScheme::Glorot => {
                if let BlockKind::Matrix { rows, cols } = block.kind {
                    let a = InitScheme::glorot_bound(rows, cols);
                    fill(dst, &mut rng, Uniform::new_inclusive(-a, a).expect("finite bound"));
                }
            }
        }
    }
    MaskedParameterSet::dense(*spec, w, seed)
}

fn fill(dst: &mut [f64], rng: &mut impl Rng, dist: impl Distribution<f64>) {
    for x in dst {
        *x = dist.sample(rng);
    }
}
