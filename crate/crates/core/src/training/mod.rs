//! Masked sparse training: Adam with post-update projection, last-step
//! cross-entropy, the iterative magnitude schedule, checkpoints and metrics.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use metrics::{read_metrics, MetricsWriter, METRICS_HEADER};

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cells::MaskedParameterSet;
use crate::criteria::top_k_mask;
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::model::{error_percent, loss_and_grad, Readout};
use crate::rng::{keyed, Stream};

/// Density annealing for iterative magnitude pruning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2Schedule {
    pub densities: Vec<f64>,
    /// Steps between successive prunes; density `i` is applied after step
    /// `(i + 1) · interval`.
    pub interval: u64,
}

impl Default for L2Schedule {
    fn default() -> Self {
        L2Schedule { densities: vec![0.8, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01], interval: 10_000 }
    }
}

impl L2Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::invalid("train.l2_schedule.interval must be at least 1"));
        }
        if self.densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::invalid("train.l2_schedule.densities must lie in [0, 1]"));
        }
        if self.densities.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("train.l2_schedule.densities must be strictly decreasing"));
        }
        Ok(())
    }

    /// Density to apply right after `step`, if `step` is a boundary.
    pub fn density_at(&self, step: u64) -> Option<f64> {
        if step == 0 || step % self.interval != 0 {
            return None;
        }
        self.densities.get((step / self.interval - 1) as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub eval_every: u64,
    /// Global gradient-norm clip. Off unless set.
    pub clip: Option<f64>,
    pub l2_schedule: Option<L2Schedule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 1,
            max_steps: None,
            seed: 0,
            eval_every: 100,
            clip: None,
            l2_schedule: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("train.batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("train.eval_every must be at least 1"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::invalid("train.clip must be positive"));
            }
        }
        if let Some(s) = &self.l2_schedule {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: u64,
    /// Mean training loss over the steps since the previous record.
    pub loss: f64,
    /// Top-1 validation error in percent.
    pub val_error: Option<f64>,
    pub retained: usize,
    /// Steps since the previous record whose gradient was clipped.
    pub clipped: u64,
    pub wall_ms: u64,
}

/// Everything needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: MaskedParameterSet,
    pub readout: Readout,
    pub opt_cell: Adam,
    pub opt_readout: Adam,
    pub step: u64,
    pub epoch: usize,
    pub batch_in_epoch: usize,
    /// Mask cardinality the run must hold.
    pub target_k: usize,
}

impl TrainState {
    pub fn new(params: MaskedParameterSet, readout: Readout) -> Self {
        let (p, r) = (params.len(), readout.len());
        TrainState {
            target_k: params.retained(),
            params,
            readout,
            opt_cell: Adam::new(p),
            opt_readout: Adam::new(r),
            step: 0,
            epoch: 0,
            batch_in_epoch: 0,
        }
    }

    /// K-sparsity audit: exact cardinality and exact zeros off the mask.
    pub fn audit(&self) -> Result<()> {
        let k = self.params.retained();
        if k != self.target_k {
            return Err(Error::Numeric(format!("mask holds {k} parameters, expected {}", self.target_k)));
        }
        if !self.params.mask_respected() {
            return Err(Error::Numeric(format!("nonzero weight at a pruned index at step {}", self.step)));
        }
        if self.opt_cell.m.iter().zip(self.params.mask()).any(|(&m, &c)| !c && m != 0.0) {
            return Err(Error::Numeric("optimizer moment nonzero at a pruned index".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<TrainMetrics>,
    /// `(step, retained)` after each magnitude-schedule prune.
    pub prunes: Vec<(u64, usize)>,
}

/// Keeps the `⌈density · P⌉` largest-magnitude weights among those currently
/// retained. Never re-enables a pruned index.
pub fn l2_schedule_prune(params: &mut MaskedParameterSet, density: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!("density must lie in [0, 1], got {density}")));
    }
    let k = ((density * params.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let k = k.min(params.retained());
    let scores: Vec<f64> =
        params.theta().iter().zip(params.mask()).map(|(w, &c)| if c { w.abs() } else { -1.0 }).collect();
    let mask = top_k_mask(&scores, k, None)?;
    params.set_mask(mask)?;
    Ok(k)
}

fn clip_grads(grads: &mut [&mut Vec<f64>], max_norm: f64) -> bool {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm <= max_norm {
        return false;
    }
    for g in grads.iter_mut() {
        g.iter_mut().for_each(|x| *x *= max_norm / norm);
    }
    true
}

fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut keyed(seed, Stream::DataOrder, epoch as u64));
    idx
}

/// Trains from `state` until `config.epochs` epochs or `config.max_steps`
/// steps are done. `on_record` sees every metrics record (e.g. to write CSV
/// or checkpoints); an error from it stops the run.
pub fn train(
    mut state: TrainState,
    data: &SequenceDataset,
    val: Option<&SequenceDataset>,
    config: &TrainConfig,
    on_record: &mut dyn FnMut(&TrainMetrics, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let spec = *state.params.spec();
    let per_epoch = data.len().div_ceil(config.batch_size);
    let started = Instant::now();
    let mut history = Vec::new();
    let mut prunes = Vec::new();
    let (mut loss_sum, mut loss_n, mut clipped) = (0.0, 0u64, 0u64);
    let mut order = epoch_order(data.len(), config.seed, state.epoch);
    let record = |state: &TrainState, loss_sum: f64, loss_n: u64, clipped: u64| -> Result<TrainMetrics> {
        state.audit()?;
        let val_error = match val {
            Some(v) => Some(error_percent(&spec, state.params.theta(), &state.readout, v, 500)?),
            None => None,
        };
        Ok(TrainMetrics {
            step: state.step,
            loss: if loss_n == 0 { f64::NAN } else { loss_sum / loss_n as f64 },
            val_error,
            retained: state.params.retained(),
            clipped,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    };
    loop {
        if state.epoch >= config.epochs || config.max_steps.is_some_and(|m| state.step >= m) {
            break;
        }
        let lo = state.batch_in_epoch * config.batch_size;
        let hi = (lo + config.batch_size).min(data.len());
        let batch = data.batch(&order[lo..hi]);
        let lg = loss_and_grad(&spec, state.params.theta(), &state.readout, &batch)?;
        if !lg.loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {} at step {}", lg.loss, state.step + 1)));
        }
        let (mut g_cell, mut g_out) = (lg.theta, lg.readout);
        if let Some(c) = config.clip {
            clipped += u64::from(clip_grads(&mut [&mut g_cell, &mut g_out], c));
        }
        let mask = state.params.mask().to_vec();
        let mut w = state.params.theta().to_vec();
        state.opt_cell.step(&mut w, &g_cell, Some(&mask), &config.adam)?;
        state.params.set_weights(w)?;
        let mut r = state.readout.to_flat();
        state.opt_readout.step(&mut r, &g_out, None, &config.adam)?;
        state.readout = Readout::from_flat(state.readout.hidden(), state.readout.classes(), &r)?;
        state.step += 1;
        loss_sum += lg.loss;
        loss_n += 1;

        if let Some(d) = config.l2_schedule.as_ref().and_then(|s| s.density_at(state.step)) {
            state.target_k = l2_schedule_prune(&mut state.params, d)?;
            state.opt_cell.apply_mask(state.params.mask());
            prunes.push((state.step, state.target_k));
        }

        state.batch_in_epoch += 1;
        if state.batch_in_epoch == per_epoch {
            state.batch_in_epoch = 0;
            state.epoch += 1;
            order = epoch_order(data.len(), config.seed, state.epoch);
        }
        let done = state.epoch >= config.epochs || config.max_steps.is_some_and(|m| state.step >= m);
        if state.step % config.eval_every == 0 || done {
            let m = record(&state, loss_sum, loss_n, clipped)?;
            (loss_sum, loss_n, clipped) = (0.0, 0, 0);
            on_record(&m, &state)?;
            history.push(m);
        }
    }
    if history.is_empty() {
        state.audit()?;
    }
    Ok(TrainOutcome { state, history, prunes })
}
