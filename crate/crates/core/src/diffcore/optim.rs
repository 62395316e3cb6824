use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// Every parameter must carry an accumulated gradient. Gradients are cleared
/// afterwards and the shared step counter advances by one.
pub fn adam_step(params: &mut ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
    if let Some((_, e)) = params.iter().find(|(_, e)| e.value.grad().is_none()) {
        return Err(Error::Optimizer(format!("parameter `{}` has no gradient", e.name)));
    }
    let t = params.step + 1;
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for e in params.entries_mut() {
        let g = e.value.grad().map(|g| g.to_vec()).unwrap_or_default();
        let (m, v) = (&mut e.m, &mut e.v);
        for (i, x) in e.value.data_mut().iter_mut().enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
        e.value.clear_grad();
    }
    params.step = t;
    Ok(())
}

/// Halve-on-plateau learning-rate rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub patience: usize,
    pub threshold: f64,
    pub factor: f64,
    pub floor: f64,
    best: Option<f64>,
    stale: usize,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule::new(DEFAULT_LR)
    }
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        PlateauSchedule {
            lr,
            patience: 50,
            threshold: 1e-4,
            factor: 0.5,
            floor: 1e-5,
            best: None,
            stale: 0,
        }
    }

    /// Feeds one epoch's validation loss and returns the learning rate to use next.
    ///
    /// An epoch counts as an improvement when the loss drops below
    /// `best * (1 - threshold)`; after `patience` consecutive non-improving
    /// epochs the rate is multiplied by `factor`, never going below `floor`.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(b) => val_loss < b * (1.0 - self.threshold),
        };
        if improved {
            self.best = Some(val_loss);
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr = (self.lr * self.factor).max(self.floor);
                self.stale = 0;
            }
        }
        self.lr
    }
}
