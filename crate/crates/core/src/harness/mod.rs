//! Training, evaluation, benchmarking and reporting.

mod checkpoint;
mod metrics;
mod prepare;
mod report;
mod toy;
mod train;

use std::fs;
use std::path::Path;
use std::str::FromStr;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, param_block_len, save_checkpoint, CheckpointHeader, ParamShape,
    CHECKPOINT_VERSION,
};
pub use metrics::{aggregate, chunks, evaluate_samples, predict_sample, sample_error, EvalOptions, MetricsRecord, SampleError};
pub use prepare::{data_dims, Normalizer, PreparedSample};
pub use report::{emit_report, parse_csv, ReportFormat};
pub use toy::{gradcheck_model, toy_config, toy_dims, toy_input, TOY_POINTS};
pub use train::{build_model, median_seconds, train, EpochLog, Loss, RunConfig, TrainOutcome};

use crate::data::{split_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::operators::{Model, ModelConfig};
use crate::par;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "log.csv";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn pick(self, s: &Split) -> &[usize] {
        match self {
            SplitName::Train => &s.train,
            SplitName::Val => &s.val,
            SplitName::Test => &s.test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::config(format!("unknown split `{s}` (train|val|test)"))),
        }
    }
}

/// Checkpoint header for a finished run. Timings stay in the log so that
/// equal seeds give equal bytes.
pub fn outcome_header(cfg: &RunConfig, ds: &Dataset, out: &TrainOutcome) -> CheckpointHeader {
    let mut h = CheckpointHeader::new(&out.model, &out.normalizer);
    h.points = cfg.points;
    h.dataset = ds.manifest.name.clone();
    h.split = cfg.split;
    h
}

/// Errors of a trained run on one split of its own dataset.
pub fn evaluate_outcome(cfg: &RunConfig, ds: &Dataset, out: &TrainOutcome, split: SplitName) -> Result<MetricsRecord> {
    let opts = EvalOptions {
        chunk: cfg.points,
        seed: cfg.seed,
        exec: cfg.exec(),
        ..EvalOptions::default()
    };
    let (rel, mae, excluded) = evaluate_samples(&out.model, &out.normalizer, &out.samples, split.pick(&out.split), &opts)?;
    Ok(MetricsRecord {
        model: out.model.arch().to_string(),
        dataset: ds.manifest.name.clone(),
        split: split.as_str().into(),
        rel_l2_pct: rel,
        mae,
        s_per_epoch: Some(out.s_per_epoch()),
        params: out.model.param_count(),
        excluded,
    })
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in log {
        w.serialize(e).expect("in-memory csv write");
    }
    let bytes = w.into_inner().expect("in-memory csv flush");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads the dataset, trains, and writes checkpoint, log and config into `out`.
pub fn train_run(cfg: &RunConfig, out: &Path, on_epoch: impl FnMut(&EpochLog)) -> Result<(Dataset, TrainOutcome)> {
    cfg.validate()?;
    let ds = Dataset::load(&cfg.data)?;
    let res = train(cfg, &ds, on_epoch)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome_header(cfg, &ds, &res), &res.model)?;
    write_log(&out.join(LOG_FILE), &res.log)?;
    let run = out.join(RUN_FILE);
    fs::write(&run, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(&run, e))?;
    Ok((ds, res))
}

/// Evaluates the checkpoint stored in `run` on one split of the dataset at `data`.
pub fn evaluate_run(run: &Path, data: &Path, split: SplitName) -> Result<MetricsRecord> {
    let ckpt = if run.is_dir() { run.join(CHECKPOINT_FILE) } else { run.to_path_buf() };
    let (header, model) = load_checkpoint(&ckpt)?;
    let ds = Dataset::load(data)?;
    let mut rec = evaluate_model(&header, &model, &ds, split)?;
    if run.is_dir() {
        rec.s_per_epoch = read_log(&run.join(LOG_FILE)).ok().map(|l| median_seconds(&l));
    }
    Ok(rec)
}

fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<EpochLog>, _>>()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn evaluate_model(header: &CheckpointHeader, model: &Model, ds: &Dataset, split: SplitName) -> Result<MetricsRecord> {
    let dims = data_dims(&ds.manifest);
    let d = &header.dims;
    if (d.geo_dim, d.load_dim, d.channels) != (dims.geo_dim, dims.load_dim, dims.channels) {
        return Err(Error::config(format!(
            "checkpoint expects (geo {}, load {}, channels {}) but the dataset has ({}, {}, {})",
            d.geo_dim, d.load_dim, d.channels, dims.geo_dim, dims.load_dim, dims.channels
        )));
    }
    let parts = split_dataset(ds.manifest.n_samples, &header.split)?;
    let samples = par::map(par::Exec::available(), &ds.samples, |s| header.normalizer.prepare(s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let opts = EvalOptions {
        chunk: header.points,
        seed: header.seed,
        ..EvalOptions::default()
    };
    let (rel, mae, excluded) = evaluate_samples(model, &header.normalizer, &samples, split.pick(&parts), &opts)?;
    Ok(MetricsRecord {
        model: header.arch.clone(),
        dataset: ds.manifest.name.clone(),
        split: split.as_str().into(),
        rel_l2_pct: rel,
        mae,
        s_per_epoch: None,
        params: model.param_count(),
        excluded,
    })
}

/// Outcome of one benchmark entry.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub result: std::result::Result<MetricsRecord, String>,
}

/// Trains every model under the same run settings (sequentially, so timings
/// do not compete) and evaluates each on the test split. A failing model
/// yields an error row and the rest still run.
pub fn benchmark(models: &[ModelConfig], base: &RunConfig, ds: &Dataset) -> Vec<BenchRow> {
    models
        .iter()
        .map(|mc| {
            let cfg = RunConfig {
                model: mc.clone(),
                ..base.clone()
            };
            let result = train(&cfg, ds, |_| {})
                .and_then(|out| evaluate_outcome(&cfg, ds, &out, SplitName::Test))
                .map_err(|e| e.to_string());
            BenchRow {
                model: mc.arch.clone(),
                result,
            }
        })
        .collect()
}
