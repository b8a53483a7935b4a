//! One-shot pruning criteria and the top-K masking rule.
//!
//! Every criterion produces a [`SensitivityVector`] over the flat recurrent
//! parameter vector; [`top_k_mask`] turns scores into a binary mask.

mod jacobian;
mod loss_based;

pub use jacobian::{chi_estimate, gamma_normalizer, jacobian_sensitivity, ChiEstimate};
pub use loss_based::{foresight_score, snip_score};

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellSpec, MaskedParameterSet};
use crate::data::{ApproxDistribution, Batch};
use crate::error::{Error, Result};
use crate::model::Readout;
use crate::rng::{stream, Stream};

/// Divisor floor for the `γ` normalization.
pub const GAMMA_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// Temporal-Jacobian spectrum sensitivity.
    #[serde(alias = "ours")]
    Jacobian,
    Snip,
    Foresight,
    Random,
    Magnitude,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 5] = [
        CriterionKind::Jacobian,
        CriterionKind::Snip,
        CriterionKind::Foresight,
        CriterionKind::Random,
        CriterionKind::Magnitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Jacobian => "jacobian",
            CriterionKind::Snip => "snip",
            CriterionKind::Foresight => "foresight",
            CriterionKind::Random => "random",
            CriterionKind::Magnitude => "magnitude",
        }
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jacobian" | "ours" => Ok(CriterionKind::Jacobian),
            "snip" => Ok(CriterionKind::Snip),
            "foresight" => Ok(CriterionKind::Foresight),
            "random" => Ok(CriterionKind::Random),
            "magnitude" | "l2" => Ok(CriterionKind::Magnitude),
            other => Err(Error::invalid(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// `Σ_ij J_ij²`, the squared Frobenius norm (sum of squared singular values).
    #[default]
    Frobenius,
    /// `‖J·1‖²`.
    OnesVector,
}

/// Gaussian input distribution for `γ`; sequence shape comes from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec { mean: 0.0, std: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionConfig {
    /// Number of sequences drawn from the approximate distribution for `γ`.
    pub sample_count: usize,
    /// Number of final timesteps `U` whose Jacobians are scored.
    pub horizon: usize,
    pub batch_size: usize,
    pub probe: Probe,
    /// Divide scores by `|γ|`. Unset means on for the Jacobian criterion and
    /// off for SNIP/Foresight; never applied to random or magnitude scores.
    pub normalize_by_gamma: Option<bool>,
    pub approx: GaussianSpec,
    pub seed: u64,
    /// Score Foresight by `|θ_n (Hg)_n|` instead of the signed product.
    pub foresight_abs: bool,
    /// When false, biases are always kept and count towards K.
    pub prune_biases: bool,
    /// Samples per tape in the Frobenius probe; `None` picks from a memory budget.
    pub chunk: Option<usize>,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        CriterionConfig {
            sample_count: 64,
            horizon: 4,
            batch_size: 64,
            probe: Probe::Frobenius,
            normalize_by_gamma: None,
            approx: GaussianSpec::default(),
            seed: 0,
            foresight_abs: false,
            prune_biases: true,
            chunk: None,
        }
    }
}

impl CriterionConfig {
    pub fn validate(&self, seq_len: Option<usize>) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::invalid("criterion.sample_count must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("criterion.batch_size must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("criterion.horizon must be at least 1"));
        }
        if let Some(s) = seq_len {
            if self.horizon >= s {
                return Err(Error::invalid(format!(
                    "criterion.horizon {} needs sequences longer than it (got length {s})",
                    self.horizon
                )));
            }
        }
        if !(self.approx.std > 0.0) {
            return Err(Error::invalid("criterion.approx.std must be positive"));
        }
        if self.chunk == Some(0) {
            return Err(Error::invalid("criterion.chunk must be at least 1"));
        }
        Ok(())
    }

    pub fn normalizes(&self, kind: CriterionKind) -> bool {
        match kind {
            CriterionKind::Random | CriterionKind::Magnitude => false,
            CriterionKind::Jacobian => self.normalize_by_gamma.unwrap_or(true),
            CriterionKind::Snip | CriterionKind::Foresight => self.normalize_by_gamma.unwrap_or(false),
        }
    }

    pub fn approx_distribution(&self, seq_len: usize, dim: usize) -> ApproxDistribution {
        ApproxDistribution { mean: self.approx.mean, std: self.approx.std, seq_len, dim }
    }
}

/// Per-parameter scores; larger means more important.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityVector {
    pub scores: Vec<f64>,
    pub criterion: CriterionKind,
    pub config: CriterionConfig,
    /// Every score is zero, so the mask would be decided by tie-breaking alone.
    pub degenerate: bool,
    /// Aggregate `χ` when the criterion computed it.
    pub chi: Option<f64>,
}

impl SensitivityVector {
    pub fn new(scores: Vec<f64>, criterion: CriterionKind, config: &CriterionConfig) -> Self {
        let degenerate = scores.iter().all(|&s| s == 0.0);
        SensitivityVector { scores, criterion, config: config.clone(), degenerate, chi: None }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Divides every score by `max(|γ_n|, ε)`.
    pub fn normalize(&mut self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.scores.len() {
            return Err(Error::Dim { what: "gamma vector", expected: self.scores.len(), actual: gamma.len() });
        }
        for (s, g) in self.scores.iter_mut().zip(gamma) {
            *s /= g.abs().max(GAMMA_EPS);
        }
        self.degenerate = self.scores.iter().all(|&s| s == 0.0);
        Ok(())
    }
}

/// `K = round((1 − sparsity) · P)`.
pub fn k_for_sparsity(param_count: usize, sparsity: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity must lie in [0, 1], got {sparsity}")));
    }
    Ok((((1.0 - sparsity) * param_count as f64).round() as usize).min(param_count))
}

/// Keeps the `k` largest scores, ties broken by ascending index. Indices in
/// `always_keep` are retained first and count towards `k`.
pub fn top_k_mask(scores: &[f64], k: usize, always_keep: Option<&[bool]>) -> Result<Vec<bool>> {
    let p = scores.len();
    if k > p {
        return Err(Error::invalid(format!("K = {k} exceeds the parameter count {p}")));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score {i} is NaN")));
    }
    let mut mask = vec![false; p];
    let mut budget = k;
    if let Some(keep) = always_keep {
        if keep.len() != p {
            return Err(Error::Dim { what: "keep mask", expected: p, actual: keep.len() });
        }
        let forced = keep.iter().filter(|&&b| b).count();
        if forced > k {
            return Err(Error::invalid(format!("{forced} always-kept parameters exceed K = {k}")));
        }
        mask.copy_from_slice(keep);
        budget -= forced;
    }
    let mut order: Vec<usize> = (0..p).filter(|&i| !mask[i]).collect();
    let by_score = |&a: &usize, &b: &usize| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b));
    if budget < order.len() {
        order.select_nth_unstable_by(budget, by_score);
        order.truncate(budget);
    }
    for i in order {
        mask[i] = true;
    }
    Ok(mask)
}

/// Mask from a score vector at `sparsity`, honoring `prune_biases`.
pub fn mask_for(scores: &SensitivityVector, spec: &CellSpec, sparsity: f64) -> Result<Vec<bool>> {
    mask_for_k(scores, spec, k_for_sparsity(scores.len(), sparsity)?)
}

/// Mask keeping exactly `k` parameters, honoring `prune_biases`.
pub fn mask_for_k(scores: &SensitivityVector, spec: &CellSpec, k: usize) -> Result<Vec<bool>> {
    let keep = (!scores.config.prune_biases).then(|| spec.layout().bias_indices());
    top_k_mask(&scores.scores, k, keep.as_deref())
}

/// I.i.d. uniform scores.
pub fn random_score(param_count: usize, config: &CriterionConfig) -> SensitivityVector {
    let mut rng = stream(config.seed, Stream::Criterion);
    let scores = (0..param_count).map(|_| rng.random::<f64>()).collect();
    SensitivityVector::new(scores, CriterionKind::Random, config)
}

/// `|w_n|`.
pub fn magnitude_score(theta: &[f64], config: &CriterionConfig) -> SensitivityVector {
    SensitivityVector::new(theta.iter().map(|w| w.abs()).collect(), CriterionKind::Magnitude, config)
}

/// Runs any criterion on dense parameters. `batch` is the scoring minibatch;
/// `readout` is needed only by the loss-based criteria.
pub fn score(
    kind: CriterionKind,
    params: &MaskedParameterSet,
    readout: Option<&Readout>,
    batch: &Batch,
    config: &CriterionConfig,
) -> Result<SensitivityVector> {
    let spec = params.spec();
    let need_readout = || readout.ok_or_else(|| Error::invalid(format!("{} needs a readout layer", kind.name())));
    let mut out = match kind {
        CriterionKind::Jacobian => jacobian_sensitivity(spec, params.theta(), batch, config)?,
        CriterionKind::Snip => snip_score(spec, params.theta(), need_readout()?, batch, config)?,
        CriterionKind::Foresight => foresight_score(spec, params.theta(), need_readout()?, batch, config)?,
        CriterionKind::Random => random_score(params.len(), config),
        CriterionKind::Magnitude => magnitude_score(params.theta(), config),
    };
    if config.normalizes(kind) {
        let dist = config.approx_distribution(batch.seq_len(), spec.input_dim);
        let gamma = gamma_normalizer(spec, params.theta(), &dist, config.sample_count, config.seed)?;
        out.normalize(&gamma)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_top_k(scores: &[f64], k: usize) -> Vec<bool> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut m = vec![false; scores.len()];
        for &i in &idx[..k] {
            m[i] = true;
        }
        m
    }

    #[test]
    fn small_examples() {
        assert_eq!(top_k_mask(&[0.3, 0.1, 0.5], 2, None).unwrap(), vec![true, false, true]);
        assert_eq!(top_k_mask(&[0.3, 0.1, 0.5], 3, None).unwrap(), vec![true; 3]);
        assert_eq!(top_k_mask(&[0.3, 0.1, 0.5], 0, None).unwrap(), vec![false; 3]);
        assert!(top_k_mask(&[0.3], 2, None).is_err());
        assert!(top_k_mask(&[f64::NAN, 1.0], 1, None).is_err());
    }

    #[test]
    fn ties_break_by_ascending_index() {
        assert_eq!(top_k_mask(&[1.0; 5], 2, None).unwrap(), vec![true, true, false, false, false]);
        let cfg = CriterionConfig::default();
        let m = magnitude_score(&[-0.5, 0.5, 0.5, 0.0], &cfg);
        assert_eq!(top_k_mask(&m.scores, 1, None).unwrap(), vec![true, false, false, false]);
        assert_eq!(m.scores[3], 0.0);
    }

    #[test]
    fn matches_full_sort_on_large_input() {
        let cfg = CriterionConfig { seed: 5, ..Default::default() };
        let s = random_score(100_000, &cfg);
        for k in [0, 1, 777, 50_000, 100_000] {
            assert_eq!(top_k_mask(&s.scores, k, None).unwrap(), brute_top_k(&s.scores, k));
        }
        let mags: Vec<f64> = s.scores.iter().map(|x| (x * 8.0).floor() - 4.0).collect();
        let m = magnitude_score(&mags, &cfg);
        assert_eq!(top_k_mask(&m.scores, 31_000, None).unwrap(), brute_top_k(&m.scores, 31_000));
    }

    #[test]
    fn positive_scaling_keeps_mask() {
        let s = random_score(1000, &CriterionConfig::default()).scores;
        let scaled: Vec<f64> = s.iter().map(|x| x * 37.5).collect();
        assert_eq!(top_k_mask(&s, 123, None).unwrap(), top_k_mask(&scaled, 123, None).unwrap());
    }

    #[test]
    fn forced_indices_count_towards_k() {
        let keep = [false, true, false, false];
        let m = top_k_mask(&[0.9, 0.0, 0.5, 0.7], 2, Some(&keep)).unwrap();
        assert_eq!(m, vec![true, true, false, false]);
        assert!(top_k_mask(&[0.0; 4], 0, Some(&keep)).is_err());
    }

    #[test]
    fn sparsity_to_k() {
        assert_eq!(k_for_sparsity(171_600, 0.95).unwrap(), 8_580);
        assert_eq!(k_for_sparsity(10, 0.0).unwrap(), 10);
        assert_eq!(k_for_sparsity(10, 1.0).unwrap(), 0);
        assert!(k_for_sparsity(10, 1.5).is_err());
    }

    #[test]
    fn random_scores_are_seeded() {
        let a = random_score(50, &CriterionConfig { seed: 1, ..Default::default() });
        assert_eq!(a, random_score(50, &CriterionConfig { seed: 1, ..Default::default() }));
        let differing = (2..12)
            .filter(|&s| {
                let b = random_score(50, &CriterionConfig { seed: s, ..Default::default() });
                top_k_mask(&a.scores, 10, None).unwrap() != top_k_mask(&b.scores, 10, None).unwrap()
            })
            .count();
        assert_eq!(differing, 10);
    }

    #[test]
    fn gamma_guard_never_produces_non_finite() {
        let mut s = SensitivityVector::new(vec![1.0, 0.0, 2.0], CriterionKind::Jacobian, &CriterionConfig::default());
        s.normalize(&[0.0, 0.0, -4.0]).unwrap();
        assert_eq!(s.scores, vec![1e12, 0.0, 0.5]);
    }
}
