use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prepare::{Normalizer, PreparedSample};
use crate::error::{Error, Result};
use crate::operators::Model;
use crate::par::{self, Exec};

/// Per-sample error terms in dataset units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleError {
    /// `‖pred - true‖₂ / ‖true‖₂`; `None` when the true field is zero.
    pub rel: Option<f64>,
    pub abs_sum: f64,
    pub count: usize,
}

pub fn sample_error(pred: &[f64], truth: &[f64]) -> Result<SampleError> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} values", pred.len(), truth.len())));
    }
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    let mut abs_sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        diff2 += d * d;
        norm2 += t * t;
        abs_sum += d.abs();
    }
    Ok(SampleError {
        rel: (norm2 > 0.0).then(|| (diff2 / norm2).sqrt()),
        abs_sum,
        count: truth.len(),
    })
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub dataset: String,
    pub split: String,
    /// Mean per-sample relative L2 error in percent; `None` if every sample
    /// had a zero true field.
    pub rel_l2_pct: Option<f64>,
    pub mae: f64,
    pub s_per_epoch: Option<f64>,
    pub params: usize,
    /// Samples left out of the percentage because their true field is zero.
    pub excluded: usize,
}

/// Mean relative L2 (%), pooled MAE and the zero-norm sample count.
pub fn aggregate(errs: &[SampleError]) -> (Option<f64>, f64, usize) {
    let rels: Vec<f64> = errs.iter().filter_map(|e| e.rel).collect();
    let excluded = errs.len() - rels.len();
    let rel = (!rels.is_empty()).then(|| 100.0 * rels.iter().sum::<f64>() / rels.len() as f64);
    let count: usize = errs.iter().map(|e| e.count).sum();
    let mae = if count == 0 {
        0.0
    } else {
        errs.iter().map(|e| e.abs_sum).sum::<f64>() / count as f64
    };
    (rel, mae, excluded)
}

/// Inference settings shared by validation and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Points per forward pass; whole samples when `None`.
    pub chunk: Option<usize>,
    pub seed: u64,
    pub exec: Exec,
    /// Worker cap (0 = no cap).
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            chunk: None,
            seed: 0,
            exec: Exec::available(),
            threads: par::env_threads(),
        }
    }
}

/// Random disjoint chunks of near-equal size covering `0..n`, each sorted.
pub fn chunks(n: usize, size: Option<usize>, seed: u64) -> Vec<Vec<usize>> {
    match size {
        Some(s) if s > 0 && s < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let k = n.div_ceil(s);
            let (base, extra) = (n / k, n % k);
            let mut out = Vec::with_capacity(k);
            let mut off = 0;
            for c in 0..k {
                let len = base + usize::from(c < extra);
                let mut part = idx[off..off + len].to_vec();
                part.sort_unstable();
                out.push(part);
                off += len;
            }
            out
        }
        _ => vec![(0..n).collect()],
    }
}

/// Prediction for every point of a sample, in model units.
pub fn predict_sample(model: &Model, s: &PreparedSample, chunk: Option<usize>, seed: u64) -> Result<Vec<f64>> {
    let c = s.channels;
    let mut out = vec![0.0; s.len() * c];
    for part in chunks(s.len(), chunk, seed) {
        let full = part.len() == s.len();
        let y = model.predict(&s.input((!full).then_some(part.as_slice())))?;
        for (r, &i) in part.iter().enumerate() {
            out[i * c..(i + 1) * c].copy_from_slice(y.row_slice(r));
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite prediction".into()));
    }
    Ok(out)
}

/// Errors on the listed samples. Per-sample results are reduced in sample
/// index order, so the outcome does not depend on the order of `indices`.
pub fn evaluate_samples(
    model: &Model,
    norm: &Normalizer,
    samples: &[PreparedSample],
    indices: &[usize],
    opts: &EvalOptions,
) -> Result<(Option<f64>, f64, usize)> {
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let errs = par::with_threads(opts.threads, || {
        par::map(opts.exec, &idx, |&i| -> Result<SampleError> {
            let s = samples
                .get(i)
                .ok_or_else(|| Error::Input(format!("sample index {i} out of range")))?;
            let pred = predict_sample(model, s, opts.chunk, opts.seed ^ i as u64)?;
            sample_error(&norm.field_from_model(&pred), &s.truth)
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&errs))
}
