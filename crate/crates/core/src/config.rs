//! Declarative experiment configuration (TOML) and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::{Activation, Arch, CellSpec, InitScheme};
use crate::criteria::{k_for_sparsity, CriterionConfig, CriterionKind};
use crate::data::{sha256_hex, SyntheticKind, SyntheticSizes};
use crate::error::{Error, Result};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    pub fn spec(&self) -> Result<CellSpec> {
        let spec = CellSpec { arch: self.arch, input_dim: self.input_dim, hidden_dim: self.hidden_dim, activation: self.activation };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: CriterionKind,
    #[serde(flatten)]
    pub config: CriterionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Sequential MNIST from an IDX pair in `path` (relative paths resolve
    /// against `JACPRUNE_DATA_ROOT` when set).
    Mnist {
        path: PathBuf,
        /// Use only the first `subset` images.
        subset: Option<usize>,
        /// Hold out the last `validation` images.
        validation: usize,
    },
    Synthetic {
        task: SyntheticKind,
        #[serde(flatten)]
        sizes: SyntheticSizes,
        validation: usize,
    },
}

/// Target sparsity as a fraction of parameters removed or an exact count kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sparsity {
    Fraction(f64),
    Keep(usize),
}

impl Sparsity {
    pub fn k(&self, param_count: usize) -> Result<usize> {
        match *self {
            Sparsity::Fraction(s) => k_for_sparsity(param_count, s),
            Sparsity::Keep(k) if k <= param_count => Ok(k),
            Sparsity::Keep(k) => Err(Error::invalid(format!("sparsity.keep = {k} exceeds {param_count} parameters"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every component stream and the criterion/train seeds derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sparsity: Sparsity,
    pub model: ModelConfig,
    pub init: InitScheme,
    pub criterion: SelectorConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.to_string().trim_end())))?;
        cfg.sync_seeds();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    /// Propagates the root seed into the sub-configs.
    pub fn sync_seeds(&mut self) {
        self.criterion.config.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Every violated constraint, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |path: &str, r: Result<()>| {
            if let Err(e) = r {
                let msg = match e {
                    Error::Invalid(m) => m,
                    other => other.to_string(),
                };
                out.push(format!("{path}: {msg}"));
            }
        };
        check("model", self.model.spec().map(|_| ()));
        if self.model.classes < 2 {
            check("model.classes", Err(Error::invalid("need at least 2 classes")));
        }
        check("init", self.init.validate());
        check("criterion", self.criterion.config.validate(None));
        check("train", self.train.validate());
        match self.sparsity {
            Sparsity::Fraction(s) if !(0.0..=1.0).contains(&s) => {
                check("sparsity.fraction", Err(Error::invalid(format!("must lie in [0, 1], got {s}"))))
            }
            Sparsity::Keep(k) => {
                if let Ok(spec) = self.model.spec() {
                    check("sparsity.keep", Sparsity::Keep(k).k(spec.param_count()).map(|_| ()));
                }
            }
            _ => {}
        }
        match &self.data {
            DataConfig::Mnist { path, subset, validation } => {
                let root = crate::data::resolve_root(path);
                if !root.is_dir() {
                    check("data.path", Err(Error::invalid(format!("{} is not a directory", root.display()))));
                }
                if self.model.input_dim != 28 {
                    check("model.input_dim", Err(Error::invalid("sequential MNIST needs input_dim = 28")));
                }
                if self.model.classes != 10 {
                    check("model.classes", Err(Error::invalid("sequential MNIST has 10 classes")));
                }
                if subset.is_some_and(|s| s <= *validation) {
                    check("data.validation", Err(Error::invalid("must be smaller than data.subset")));
                }
            }
            DataConfig::Synthetic { task, sizes, validation } => {
                if *task != SyntheticKind::LastStepClass {
                    check("data.task", Err(Error::invalid("only last_step_class has per-sequence labels")));
                }
                if sizes.dim != self.model.input_dim {
                    check("data.dim", Err(Error::invalid("must equal model.input_dim")));
                }
                if sizes.classes != self.model.classes {
                    check("data.classes", Err(Error::invalid("must equal model.classes")));
                }
                if *validation >= sizes.count {
                    check("data.validation", Err(Error::invalid("must be smaller than data.count")));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(p.join("; ")))
        }
    }

    /// Hex sha256 of the canonical JSON form, first 16 characters. The output
    /// directory is not part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        sha256_hex(&json)[..16].to_string()
    }
}
