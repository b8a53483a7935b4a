//! The four experiment commands behind the `jacprune` binary: prune, train,
//! analyze and compare. Every artifact carries the config hash and seed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::{connection_map_export, connectivity_stats, spectrum_scan, ConnectivityReport, ScanOptions, SpectrumReport};
use crate::cells::{initialize, CellSpec, MaskedParameterSet};
use crate::config::{DataConfig, ExperimentConfig};
use crate::criteria::{mask_for_k, score, CriterionKind};
use crate::data::{load_mnist, resolve_root, synthetic_task, Batch, DatasetManifest, SequenceDataset};
use crate::error::Error;
use crate::model::Readout;
use crate::rng::{stream, Stream};
use crate::training::{load_checkpoint, save_checkpoint, train, MetricsWriter, TrainMetrics, TrainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Numeric,
    Output,
}

/// A command failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub source: Error,
}

impl PipelineError {
    /// 2 config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Config => 2,
            Stage::Data => 3,
            Stage::Numeric => 4,
            Stage::Output => 1,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.stage {
            Stage::Config => "config error",
            Stage::Data => "data error",
            Stage::Numeric => "numeric failure",
            Stage::Output => "error",
        };
        write!(f, "{what}: {}", self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

fn at(stage: Stage) -> impl Fn(Error) -> PipelineError {
    move |source| {
        let stage = match source {
            Error::Numeric(_) | Error::Autodiff(_) => Stage::Numeric,
            _ => stage,
        };
        PipelineError { stage, source }
    }
}

/// Flag values that win over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub sparsity: Option<f64>,
    pub criterion: Option<CriterionKind>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out_dir {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = self.sparsity {
            cfg.sparsity = crate::config::Sparsity::Fraction(s);
        }
        if let Some(c) = self.criterion {
            cfg.criterion.kind = c;
        }
        cfg.sync_seeds();
    }
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> PipelineResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).map_err(at(Stage::Config))?;
    overrides.apply(&mut cfg);
    cfg.validate().map_err(at(Stage::Config))?;
    Ok(cfg)
}

pub struct LoadedData {
    pub train: SequenceDataset,
    pub val: SequenceDataset,
    pub manifest: Option<DatasetManifest>,
}

pub fn load_data(cfg: &ExperimentConfig) -> PipelineResult<LoadedData> {
    let data = at(Stage::Data);
    match &cfg.data {
        DataConfig::Mnist { path, subset, validation } => {
            let (mut ds, mut manifest) = load_mnist(&resolve_root(path)).map_err(&data)?;
            if let Some(n) = subset {
                if *n > ds.len() {
                    return Err(data(Error::Invalid(format!("data.subset = {n} but only {} images", ds.len()))));
                }
                ds = ds.head(*n);
            }
            let (train, val) = ds.split_holdout(*validation).map_err(&data)?;
            manifest.subset = Some(ds.len());
            manifest.train = train.len();
            manifest.validation = val.len();
            Ok(LoadedData { train, val, manifest: Some(manifest) })
        }
        DataConfig::Synthetic { task, sizes, validation } => {
            let ds = synthetic_task(*task, *sizes, cfg.seed).map_err(&data)?;
            let (train, val) = ds.split_holdout(*validation).map_err(&data)?;
            Ok(LoadedData { train, val, manifest: None })
        }
    }
}

/// The criterion minibatch: `criterion.batch_size` training sequences drawn
/// without replacement from the batch stream.
pub fn scoring_batch(cfg: &ExperimentConfig, train: &SequenceDataset) -> Batch {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut stream(cfg.seed, Stream::Batch));
    idx.truncate(cfg.criterion.config.batch_size.min(train.len()));
    train.batch(&idx)
}

/// Dense initial parameters and readout for `cfg`.
pub fn init_model(cfg: &ExperimentConfig) -> PipelineResult<(MaskedParameterSet, Readout)> {
    let spec = cfg.model.spec().map_err(at(Stage::Config))?;
    let params = initialize(&spec, cfg.init, cfg.seed).map_err(at(Stage::Config))?;
    Ok((params, Readout::init(spec.hidden_dim, cfg.model.classes, cfg.seed)))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> PipelineResult<()> {
    std::fs::write(path, bytes).map_err(|e| PipelineError { stage: Stage::Output, source: Error::Io { path: path.into(), source: e } })
}

fn create_dir(dir: &Path) -> PipelineResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError { stage: Stage::Output, source: Error::Io { path: dir.into(), source: e } })
}

fn json_pretty<T: Serialize>(v: &T) -> PipelineResult<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| at(Stage::Output)(e.into()))
}

/// Field-by-field difference between the configured cell and a file's.
pub fn spec_diff(expected: &CellSpec, found: &CellSpec) -> Option<String> {
    let mut d = Vec::new();
    if expected.arch != found.arch {
        d.push(format!("arch: config {:?}, file {:?}", expected.arch, found.arch));
    }
    if expected.input_dim != found.input_dim {
        d.push(format!("input_dim: config {}, file {}", expected.input_dim, found.input_dim));
    }
    if expected.hidden_dim != found.hidden_dim {
        d.push(format!("hidden_dim: config {}, file {}", expected.hidden_dim, found.hidden_dim));
    }
    if expected.activation != found.activation {
        d.push(format!("activation: config {:?}, file {:?}", expected.activation, found.activation));
    }
    (!d.is_empty()).then(|| d.join("; "))
}

fn check_spec(cfg: &ExperimentConfig, found: &CellSpec, path: &Path) -> PipelineResult<()> {
    let expected = cfg.model.spec().map_err(at(Stage::Config))?;
    match spec_diff(&expected, found) {
        None => Ok(()),
        Some(d) => Err(PipelineError {
            stage: Stage::Config,
            source: Error::Incompatible(format!("{} does not match the configured model: {d}", path.display())),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSidecar {
    pub criterion: String,
    pub config_hash: String,
    pub seed: u64,
    pub param_count: usize,
    pub k: usize,
    pub retained: usize,
    /// Aggregate χ at the scored parameters (Jacobian criterion only).
    pub chi: Option<f64>,
    pub degenerate: bool,
    /// Score plus mask selection, excluding data loading.
    pub timing_ms: f64,
    pub connectivity: ConnectivityReport,
}

#[derive(Clone, Debug)]
pub struct PruneOutput {
    pub params: MaskedParameterSet,
    pub readout: Readout,
    pub sidecar: PruneSidecar,
    pub mask_path: PathBuf,
    pub sidecar_path: PathBuf,
}

/// Scores the initial parameters and keeps the top K; no files written.
pub fn prune_params(
    cfg: &ExperimentConfig,
    data: &LoadedData,
) -> PipelineResult<(MaskedParameterSet, Readout, PruneSidecar)> {
    let (mut params, readout) = init_model(cfg)?;
    let batch = scoring_batch(cfg, &data.train);
    let k = cfg.sparsity.k(params.len()).map_err(at(Stage::Config))?;
    let crit = &cfg.criterion;
    let started = Instant::now();
    let sv = score(crit.kind, &params, Some(&readout), &batch, &crit.config).map_err(at(Stage::Numeric))?;
    let mask = mask_for_k(&sv, params.spec(), k).map_err(at(Stage::Numeric))?;
    let timing_ms = started.elapsed().as_secs_f64() * 1e3;
    params.set_mask(mask).map_err(at(Stage::Numeric))?;
    let connectivity = connectivity_stats(params.mask(), &params.layout()).map_err(at(Stage::Numeric))?;
    let sidecar = PruneSidecar {
        criterion: crit.kind.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        param_count: params.len(),
        k,
        retained: params.retained(),
        chi: sv.chi,
        degenerate: sv.degenerate,
        timing_ms,
        connectivity,
    };
    Ok((params, readout, sidecar))
}

fn file_meta(cfg: &ExperimentConfig, extra: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    let mut meta = BTreeMap::new();
    meta.insert("config_hash".to_string(), serde_json::json!(cfg.hash()));
    for (k, v) in extra {
        meta.insert(k.to_string(), v.clone());
    }
    meta
}

/// Writes `mask.params` and `prune.json` into the output directory.
pub fn cmd_prune(cfg: &ExperimentConfig) -> PipelineResult<PruneOutput> {
    cfg.validate().map_err(at(Stage::Config))?;
    let data = load_data(cfg)?;
    let (params, readout, sidecar) = prune_params(cfg, &data)?;
    create_dir(&cfg.out_dir)?;
    let mask_path = cfg.out_dir.join("mask.params");
    let meta = file_meta(cfg, &[("criterion", serde_json::json!(sidecar.criterion)), ("k", serde_json::json!(sidecar.k))]);
    let bytes = params.to_bytes(meta).map_err(at(Stage::Output))?;
    write_file(&mask_path, bytes)?;
    let sidecar_path = cfg.out_dir.join("prune.json");
    write_file(&sidecar_path, json_pretty(&sidecar)?)?;
    Ok(PruneOutput { params, readout, sidecar, mask_path, sidecar_path })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub state: TrainState,
    pub history: Vec<TrainMetrics>,
    pub resumed_from: Option<u64>,
    pub checkpoint_dir: PathBuf,
    pub metrics_path: PathBuf,
}

impl TrainSummary {
    pub fn final_val_error(&self) -> Option<f64> {
        self.history.last().and_then(|m| m.val_error)
    }
}

/// Where a train run starts from.
#[derive(Clone, Debug, Default)]
pub enum StartFrom {
    /// Dense initialization from the config.
    #[default]
    Dense,
    /// A parameter file written by `prune`.
    Mask(PathBuf),
    /// The checkpoint in `<out>/checkpoint`, if any; dense otherwise.
    Resume,
}

/// Trains and writes `metrics.csv` (appended per eval) and `checkpoint/`
/// (rewritten per eval and at the end).
pub fn cmd_train(cfg: &ExperimentConfig, start: &StartFrom) -> PipelineResult<TrainSummary> {
    cfg.validate().map_err(at(Stage::Config))?;
    let data = load_data(cfg)?;
    let ckpt = cfg.out_dir.join("checkpoint");
    let (state, resumed_from) = match start {
        StartFrom::Resume if ckpt.join("checkpoint.json").is_file() => {
            let (state, meta) = load_checkpoint(&ckpt).map_err(at(Stage::Config))?;
            check_spec(cfg, state.params.spec(), &ckpt)?;
            (state, Some(meta.step))
        }
        StartFrom::Mask(path) => {
            let (params, _) = MaskedParameterSet::load(path).map_err(at(Stage::Config))?;
            check_spec(cfg, params.spec(), path)?;
            let (_, readout) = init_model(cfg)?;
            (TrainState::new(params, readout), None)
        }
        StartFrom::Dense | StartFrom::Resume => {
            let (params, readout) = init_model(cfg)?;
            (TrainState::new(params, readout), None)
        }
    };
    train_state(cfg, &data, state, resumed_from)
}

fn train_state(
    cfg: &ExperimentConfig,
    data: &LoadedData,
    state: TrainState,
    resumed_from: Option<u64>,
) -> PipelineResult<TrainSummary> {
    create_dir(&cfg.out_dir)?;
    let hash = cfg.hash();
    let ckpt = cfg.out_dir.join("checkpoint");
    let metrics_path = cfg.out_dir.join("metrics.csv");
    if resumed_from.is_none() && metrics_path.exists() {
        std::fs::remove_file(&metrics_path).map_err(|e| at(Stage::Output)(Error::Io { path: metrics_path.clone(), source: e }))?;
    }
    let mut writer = MetricsWriter::open(&metrics_path, &hash, cfg.seed).map_err(at(Stage::Output))?;
    let val = (!data.val.is_empty()).then_some(&data.val);
    let mut on_record = |m: &TrainMetrics, s: &TrainState| {
        writer.write(m)?;
        save_checkpoint(&ckpt, s, cfg.seed, &hash)
    };
    let outcome = train(state, &data.train, val, &cfg.train, &mut on_record).map_err(at(Stage::Numeric))?;
    save_checkpoint(&ckpt, &outcome.state, cfg.seed, &hash).map_err(at(Stage::Output))?;
    Ok(TrainSummary { state: outcome.state, history: outcome.history, resumed_from, checkpoint_dir: ckpt, metrics_path })
}

#[derive(Clone, Debug)]
pub struct AnalyzeOutput {
    pub spectrum: SpectrumReport,
    pub connectivity: ConnectivityReport,
    pub files: Vec<PathBuf>,
}

/// Loads parameters from a checkpoint directory or a parameter file.
pub fn load_params(source: &Path) -> crate::Result<(MaskedParameterSet, Option<u64>)> {
    if source.is_dir() {
        let (state, meta) = load_checkpoint(source)?;
        Ok((state.params, Some(meta.step)))
    } else {
        let (params, header) = MaskedParameterSet::load(source)?;
        let step = header.meta.get("step").and_then(|v| v.as_u64());
        Ok((params, step))
    }
}

/// Spectrum of the temporal Jacobians on the scoring minibatch plus the
/// connectivity of the mask. Writes `spectrum.csv`, `spectrum.json`,
/// `connectivity.json` and `connections.csv`.
pub fn cmd_analyze(cfg: &ExperimentConfig, source: Option<&Path>, opts: &ScanOptions) -> PipelineResult<AnalyzeOutput> {
    cfg.validate().map_err(at(Stage::Config))?;
    let (params, step) = match source {
        Some(p) => {
            let (params, step) = load_params(p).map_err(at(Stage::Config))?;
            check_spec(cfg, params.spec(), p)?;
            (params, step)
        }
        None => (init_model(cfg)?.0, Some(0)),
    };
    let data = load_data(cfg)?;
    let batch = scoring_batch(cfg, &data.train);
    let hash = cfg.hash();
    let mut spectrum = spectrum_scan(params.spec(), params.theta(), &batch, opts).map_err(at(Stage::Numeric))?;
    spectrum.step = step;
    spectrum.seed = Some(cfg.seed);
    spectrum.config_hash = Some(hash.clone());
    let connectivity = connectivity_stats(params.mask(), &params.layout()).map_err(at(Stage::Numeric))?;
    let map = connection_map_export(params.mask(), &params.layout()).map_err(at(Stage::Numeric))?;

    create_dir(&cfg.out_dir)?;
    let files = vec![
        cfg.out_dir.join("spectrum.csv"),
        cfg.out_dir.join("spectrum.json"),
        cfg.out_dir.join("connectivity.json"),
        cfg.out_dir.join("connections.csv"),
    ];
    write_file(&files[0], spectrum.to_csv())?;
    write_file(&files[1], spectrum.summary_json().map_err(at(Stage::Output))? + "\n")?;
    let conn = serde_json::json!({ "config_hash": hash, "seed": cfg.seed, "step": step, "report": connectivity });
    write_file(&files[2], json_pretty(&conn)?)?;
    write_file(&files[3], format!("# config_hash={hash} seed={}\n{map}", cfg.seed))?;
    Ok(AnalyzeOutput { spectrum, connectivity, files })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub criterion: String,
    pub seed: u64,
    pub config_hash: String,
    pub final_step: u64,
    pub val_error: f64,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: String,
    pub runs: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// `mean±std`, two decimals.
    pub display: String,
    pub missing_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config_hash: String,
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellResult>,
    /// `(criterion, seed, reason)` for every cell that produced no result.
    pub missing: Vec<(String, u64, String)>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 { 0.0 } else { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) };
    Some((mean, var.sqrt()))
}

fn cell_config(cfg: &ExperimentConfig, kind: CriterionKind, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.criterion.kind = kind;
    c.seed = seed;
    c.sync_seeds();
    c.out_dir = cfg.out_dir.join("cells").join(format!("{}-seed{seed}", kind.name()));
    c
}

fn run_cell(cfg: &ExperimentConfig) -> PipelineResult<CellResult> {
    let result_path = cfg.out_dir.join("result.json");
    let hash = cfg.hash();
    if let Ok(bytes) = std::fs::read(&result_path) {
        if let Ok(r) = serde_json::from_slice::<CellResult>(&bytes) {
            if r.config_hash == hash {
                return Ok(r);
            }
        }
    }
    let data = load_data(cfg)?;
    let (params, readout, sidecar) = prune_params(cfg, &data)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("prune.json"), json_pretty(&sidecar)?)?;
    let summary = train_state(cfg, &data, TrainState::new(params, readout), None)?;
    let val_error = summary.final_val_error().ok_or_else(|| PipelineError {
        stage: Stage::Config,
        source: Error::Invalid("compare needs a validation split and at least one training step".into()),
    })?;
    let r = CellResult {
        criterion: cfg.criterion.kind.name().to_string(),
        seed: cfg.seed,
        config_hash: hash,
        final_step: summary.state.step,
        val_error,
        retained: summary.state.params.retained(),
    };
    write_file(&result_path, json_pretty(&r)?)?;
    Ok(r)
}

/// Runs (or reloads from `<out>/cells/<criterion>-seed<s>/result.json`) each
/// criterion × seed cell and writes `summary.csv` and `summary.json`.
/// Failed cells are listed and the remaining rows are still emitted.
pub fn cmd_compare(cfg: &ExperimentConfig, criteria: &[CriterionKind], seeds: &[u64]) -> PipelineResult<CompareSummary> {
    cfg.validate().map_err(at(Stage::Config))?;
    if criteria.is_empty() || seeds.is_empty() {
        return Err(at(Stage::Config)(Error::Invalid("compare needs at least one criterion and one seed".into())));
    }
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    let mut rows = Vec::new();
    for &kind in criteria {
        let mut finals = Vec::new();
        let mut missing_seeds = Vec::new();
        for &seed in seeds {
            match run_cell(&cell_config(cfg, kind, seed)) {
                Ok(r) => {
                    finals.push(r.val_error);
                    cells.push(r);
                }
                Err(e) => {
                    missing_seeds.push(seed);
                    missing.push((kind.name().to_string(), seed, e.to_string()));
                }
            }
        }
        let ms = mean_std(&finals);
        rows.push(SummaryRow {
            criterion: kind.name().to_string(),
            runs: finals.len(),
            mean: ms.map(|m| m.0),
            std: ms.map(|m| m.1),
            display: ms.map_or("-".into(), |(m, s)| format!("{m:.2}±{s:.2}")),
            missing_seeds,
        });
    }
    let summary = CompareSummary { config_hash: cfg.hash(), rows, cells, missing };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("summary.json"), json_pretty(&summary)?)?;
    write_file(&cfg.out_dir.join("summary.csv"), summary_csv(&summary, cfg.seed))?;
    Ok(summary)
}

pub fn summary_csv(s: &CompareSummary, seed: u64) -> String {
    let mut out = format!("# config_hash={} seed={seed}\ncriterion,runs,mean,std,display,missing\n", s.config_hash);
    for r in &s.rows {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
        let miss: Vec<String> = r.missing_seeds.iter().map(u64::to_string).collect();
        out.push_str(&format!("{},{},{},{},{},{}\n", r.criterion, r.runs, f(r.mean), f(r.std), r.display, miss.join(" ")));
    }
    out
}
