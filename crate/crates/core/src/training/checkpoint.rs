//! A checkpoint is a directory: `params.bin` (parameter/mask file),
//! `readout.bin` and `optimizer.bin` (little-endian f64 blobs) and
//! `checkpoint.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, TrainState};
use crate::cells::MaskedParameterSet;
use crate::error::{Error, Result};
use crate::model::Readout;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub epoch: usize,
    pub batch_in_epoch: usize,
    pub target_k: usize,
    pub classes: usize,
    pub seed: u64,
    pub config_hash: String,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(dir: &Path, state: &TrainState, seed: u64, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta_map = BTreeMap::new();
    meta_map.insert("config_hash".to_string(), serde_json::json!(config_hash));
    meta_map.insert("step".to_string(), serde_json::json!(state.step));
    state.params.save(&dir.join("params.bin"), meta_map)?;
    let ro: Vec<u8> = state.readout.to_flat().iter().flat_map(|x| x.to_le_bytes()).collect();
    write(&dir.join("readout.bin"), &ro)?;
    let mut opt = state.opt_cell.to_bytes();
    opt.extend(state.opt_readout.to_bytes());
    write(&dir.join("optimizer.bin"), &opt)?;
    let meta = CheckpointMeta {
        step: state.step,
        epoch: state.epoch,
        batch_in_epoch: state.batch_in_epoch,
        target_k: state.target_k,
        classes: state.readout.classes(),
        seed,
        config_hash: config_hash.to_string(),
    };
    write(&dir.join("checkpoint.json"), (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())
}

pub fn load_checkpoint(dir: &Path) -> Result<(TrainState, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&read(&dir.join("checkpoint.json"))?)?;
    let (params, _) = MaskedParameterSet::load(&dir.join("params.bin"))?;
    let ro: Vec<f64> =
        read(&dir.join("readout.bin"))?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
    let readout = Readout::from_flat(params.spec().hidden_dim, meta.classes, &ro)?;
    let opt = read(&dir.join("optimizer.bin"))?;
    let (opt_cell, used) = Adam::from_bytes(&opt)?;
    let (opt_readout, used2) = Adam::from_bytes(&opt[used..])?;
    if used + used2 != opt.len() || opt_cell.m.len() != params.len() || opt_readout.m.len() != readout.len() {
        return Err(Error::Incompatible("optimizer state does not match the parameter shapes".into()));
    }
    let state = TrainState {
        params,
        readout,
        opt_cell,
        opt_readout,
        step: meta.step,
        epoch: meta.epoch,
        batch_in_epoch: meta.batch_in_epoch,
        target_k: meta.target_k,
    };
    state.audit()?;
    Ok((state, meta))
}
