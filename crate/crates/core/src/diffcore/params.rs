use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// One named trainable tensor with its Adam moments.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named parameter collection shared by one model and one optimizer.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        let n = value.len();
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Ids ordered by parameter name (the checkpoint order).
    pub fn sorted_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = (0..self.entries.len()).map(ParamId).collect();
        ids.sort_by(|a, b| self.entries[a.0].name.cmp(&self.entries[b.0].name));
        ids
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Adds a dense gradient table (one vector per parameter, in id order)
    /// scaled by `scale` into the per-parameter accumulators.
    pub fn accumulate(&mut self, grads: &[Vec<f64>], scale: f64) -> Result<()> {
        if grads.len() != self.entries.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.entries.len()
            )));
        }
        for (e, g) in self.entries.iter_mut().zip(grads) {
            if g.len() != e.len() {
                return Err(Error::shape(format!(
                    "gradient for `{}` has {} entries, expected {}",
                    e.name,
                    g.len(),
                    e.len()
                )));
            }
            let acc = e.value.grad_mut();
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.value.clear_grad();
        }
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    /// Flattened values in checkpoint order.
    pub fn flatten_sorted(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for id in self.sorted_ids() {
            out.extend_from_slice(self.value(id).data());
        }
        out
    }

    /// Overwrites all values from a flat block in checkpoint order.
    pub fn load_sorted(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::shape(format!(
                "parameter block has {} values, model needs {}",
                flat.len(),
                self.count()
            )));
        }
        let mut off = 0;
        for id in self.sorted_ids() {
            let n = self.entries[id.0].len();
            self.entries[id.0]
                .value
                .data_mut()
                .copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights of shape `fan_in × fan_out`.
pub fn init_affine_weight<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], bound)
}

pub fn init_affine_bias<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    uniform(rng, &[1, fan_out], bound)
}

/// SIREN weights: first layer U(-1/n, 1/n), later layers U(-sqrt(6/n)/w0, sqrt(6/n)/w0).
pub fn init_siren_weight<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, first: bool, omega0: f64) -> Tensor {
    let n = fan_in.max(1) as f64;
    let bound = if first { 1.0 / n } else { (6.0 / n).sqrt() / omega0 };
    uniform(rng, &[fan_in, fan_out], bound)
}

pub fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
