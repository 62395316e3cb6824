use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            train: 0.6,
            val: 0.1,
            test: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

fn floor_count(n: usize, frac: f64) -> usize {
    // tolerate representation error such as 0.6 * 625 = 374.99999...
    (n as f64 * frac + 1e-9).floor() as usize
}

/// Seeded shuffle then contiguous cut. Train and validation take the floor
/// of their fractions; test receives the remainder.
pub fn split_dataset(n: usize, spec: &SplitSpec) -> Result<Split> {
    if n < 10 {
        return Err(Error::config(format!("need at least 10 samples to split, got {n}")));
    }
    let fr = [spec.train, spec.val, spec.test];
    if fr.iter().any(|f| !(*f > 0.0) || !f.is_finite()) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must be positive and sum to 1"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let nt = floor_count(n, spec.train);
    let nv = floor_count(n, spec.val);
    let test = idx.split_off(nt + nv);
    let val = idx.split_off(nt);
    Ok(Split { train: idx, val, test })
}
