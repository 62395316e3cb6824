use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Number of randomly chosen scalars checked in addition to one entry
    /// from every parameter tensor.
    pub samples: usize,
    /// Magnitude below which deviations are measured in absolute terms.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            samples: 64,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel: f64,
    pub checked: usize,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

/// Compares reverse-mode gradients of a scalar loss with central finite
/// differences over a random subset of parameter entries.
///
/// `forward` must record the loss on the given tape and return its node.
pub fn grad_check<F>(forward: F, params: &ParamStore, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let l = forward(&mut tape, store)?;
        let v = tape.value(l);
        if v.len() != 1 {
            return Err(Error::Check(format!("loss has shape {:?}, expected a scalar", v.shape())));
        }
        Ok(v.data()[0])
    };

    let mut tape = Tape::new();
    let loss = forward(&mut tape, params)?;
    let l0 = tape.value(loss).data()[0];
    let l1 = eval(params)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::Check(format!("forward is not deterministic: {l0} vs {l1}")));
    }
    let grads = tape.backward(loss)?.into_param_grads(params);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picks: Vec<(ParamId, usize)> = Vec::new();
    let mut offsets = Vec::with_capacity(params.len());
    let mut total = 0;
    for (id, e) in params.iter() {
        offsets.push((total, id));
        if !e.is_empty() {
            picks.push((id, rand::Rng::random_range(&mut rng, 0..e.len())));
        }
        total += e.len();
    }
    if total > 0 {
        for flat in sample(&mut rng, total, opts.samples.min(total)) {
            let pos = offsets.partition_point(|(o, _)| *o <= flat) - 1;
            let (o, id) = offsets[pos];
            picks.push((id, flat - o));
        }
    }
    picks.sort();
    picks.dedup();

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel: 0.0,
        checked: 0,
        worst: String::new(),
    };
    for (id, i) in picks {
        let orig = work.value(id).data()[i];
        work.value_mut(id).data_mut()[i] = orig + opts.step;
        let lp = eval(&work)?;
        work.value_mut(id).data_mut()[i] = orig - opts.step;
        let lm = eval(&work)?;
        work.value_mut(id).data_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * opts.step);
        let an = grads[id.0][i];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(opts.floor);
        report.checked += 1;
        if rel > report.max_rel || report.worst.is_empty() {
            report.max_rel = report.max_rel.max(rel);
            if rel >= report.max_rel {
                report.worst = format!("{}[{i}] analytic {an:.6e} fd {fd:.6e}", params.name(id));
            }
        }
    }
    Ok(report)
}
