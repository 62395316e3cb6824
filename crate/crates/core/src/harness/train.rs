use std::path::PathBuf;
use std::time::Instant;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::chunks;
use super::prepare::{data_dims, Normalizer, PreparedSample};
use crate::data::{split_dataset, Dataset, Split, SplitSpec};
use crate::diffcore::{adam_step, Activation, ParamStore, PlateauSchedule, Tape, Var, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::operators::{Model, ModelConfig};
use crate::par::{self, Exec};

/// Per-sample training objective, measured in model units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    #[default]
    Mse,
    /// Squared error over the sample's mean squared target, so every sample
    /// weighs the same in relative terms.
    RelMse,
}

impl std::str::FromStr for Loss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Loss::Mse),
            "rel-mse" => Ok(Loss::RelMse),
            _ => Err(Error::config(format!("unknown loss `{s}` (mse|rel-mse)"))),
        }
    }
}

/// Everything that defines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: PathBuf,
    pub epochs: usize,
    /// Samples whose gradients are accumulated per optimizer step.
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub split: SplitSpec,
    /// Points drawn per sample and step; whole samples when `None`. Validation
    /// and evaluation then run on disjoint chunks of this size.
    pub points: Option<usize>,
    /// Run per-sample work of a step on the thread pool.
    pub parallel: bool,
    pub patience: usize,
    pub loss: Loss,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            data: PathBuf::new(),
            epochs: 1000,
            batch: 5,
            lr: 1e-3,
            seed: 0,
            split: SplitSpec::default(),
            points: None,
            parallel: true,
            patience: 50,
            loss: Loss::Mse,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.family()?;
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("epochs and batch must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate {} is not positive", self.lr)));
        }
        if self.points == Some(0) {
            return Err(Error::config("points per step must be positive"));
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::available()
        } else {
            Exec::Serial
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    /// Wall-clock seconds of the optimizer steps (no I/O, no validation).
    pub seconds: f64,
    pub steps: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: Model,
    pub normalizer: Normalizer,
    pub split: Split,
    pub samples: Vec<PreparedSample>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub final_store: ParamStore,
}

impl TrainOutcome {
    pub fn total_steps(&self) -> usize {
        self.log.iter().map(|e| e.steps).sum()
    }

    /// Median seconds per epoch.
    pub fn s_per_epoch(&self) -> f64 {
        median_seconds(&self.log)
    }
}

pub fn median_seconds(log: &[EpochLog]) -> f64 {
    let mut t: Vec<f64> = log.iter().map(|e| e.seconds).collect();
    t.sort_by(f64::total_cmp);
    match t.len() {
        0 => 0.0,
        n if n % 2 == 1 => t[n / 2],
        n => 0.5 * (t[n / 2 - 1] + t[n / 2]),
    }
}

/// Builds the model for a dataset, switching to a sigmoid output when the
/// fields are trained in normalized units.
pub fn build_model(cfg: &RunConfig, ds: &Dataset) -> Result<Model> {
    let mut mc = cfg.model.clone();
    if ds.manifest.normalized && mc.out_activation == Activation::Identity {
        mc.out_activation = Activation::Sigmoid;
    }
    Model::build(&mc, &data_dims(&ds.manifest), cfg.seed)
}

fn record_loss(tape: &mut Tape, model: &Model, s: &PreparedSample, subset: Option<&[usize]>, kind: Loss) -> Result<Var> {
    let y = model.forward(tape, &s.input(subset))?;
    let target = s.target_rows(subset);
    let mse = tape.mse(y, &target)?;
    let ms = target.data().iter().map(|v| v * v).sum::<f64>() / target.len() as f64;
    Ok(match kind {
        Loss::RelMse if ms > 0.0 => tape.scale(mse, 1.0 / ms),
        _ => mse,
    })
}

fn sample_loss_grads(model: &Model, s: &PreparedSample, subset: Option<&[usize]>, kind: Loss) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let loss = record_loss(&mut tape, model, s, subset, kind)?;
    let l = tape.value(loss).data()[0];
    if !l.is_finite() {
        return Ok((l, Vec::new()));
    }
    Ok((l, tape.backward(loss)?.into_param_grads(&model.store)))
}

fn sample_loss(model: &Model, s: &PreparedSample, subset: Option<&[usize]>, kind: Loss) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = record_loss(&mut tape, model, s, subset, kind)?;
    Ok(tape.value(loss).data()[0])
}

/// Trains on an in-memory dataset. `on_epoch` sees each log entry as it is made.
pub fn train(cfg: &RunConfig, ds: &Dataset, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = split_dataset(ds.manifest.n_samples, &cfg.split)?;
    let normalizer = Normalizer::fit(ds, &split.train)?;
    let mut model = build_model(cfg, ds)?;
    let exec = cfg.exec();
    let samples = par::map(exec, &ds.samples, |s| normalizer.prepare(s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // fixed validation subsets: the first chunk of each validation sample
    let val_sets: Vec<(usize, Option<Vec<usize>>)> = split
        .val
        .iter()
        .map(|&i| {
            let n = samples[i].len();
            let part = chunks(n, cfg.points, cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            (i, (part[0].len() < n).then(|| part[0].clone()))
        })
        .collect();

    let mut sched = PlateauSchedule::new(cfg.lr);
    sched.patience = cfg.patience;
    let mut lr = cfg.lr;
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order = split.train.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let subsets: Vec<(usize, Option<Vec<usize>>)> = batch
                .iter()
                .map(|&i| {
                    let n = samples[i].len();
                    let sub = cfg.points.filter(|&k| k < n).map(|k| {
                        let mut v = sample(&mut rng, n, k).into_vec();
                        v.sort_unstable();
                        v
                    });
                    (i, sub)
                })
                .collect();
            let results = par::map(exec, &subsets, |(i, sub)| sample_loss_grads(&model, &samples[*i], sub.as_deref(), cfg.loss));
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (l, g) = r?;
                if !l.is_finite() {
                    return Err(Error::Numerical(format!("loss is {l} at epoch {epoch}, step {}", b + 1)));
                }
                loss_sum += l;
                model.store.accumulate(&g, scale)?;
            }
            adam_step(&mut model.store, lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)?;
            steps += 1;
        }
        let seconds = start.elapsed().as_secs_f64();

        let val_losses = par::map(exec, &val_sets, |(i, sub)| sample_loss(&model, &samples[*i], sub.as_deref(), cfg.loss))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let val_loss = val_losses.iter().sum::<f64>() / val_losses.len().max(1) as f64;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss is {val_loss} at epoch {epoch}")));
        }
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.store.clone()));
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / split.train.len() as f64,
            val_loss,
            lr,
            seconds,
            steps,
        };
        on_epoch(&entry);
        log.push(entry);
        lr = sched.step(val_loss);
    }

    let (best_val, best_epoch, best_store) = best.expect("at least one epoch");
    let final_store = std::mem::replace(&mut model.store, best_store);
    Ok(TrainOutcome {
        model,
        normalizer,
        split,
        samples,
        log,
        best_epoch,
        best_val,
        final_store,
    })
}
