use serde::{Deserialize, Serialize};

use super::format::Sample;
use crate::error::{Error, Result};

/// Per-channel min-max statistics. A constant channel maps to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormRecord {
    /// Statistics over `rows`, each of length `width`.
    pub fn fit<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f32]>) -> Result<NormRecord> {
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        let mut seen = false;
        for r in rows {
            if r.len() != width {
                return Err(Error::shape(format!("row of width {} in a {width}-channel fit", r.len())));
            }
            seen = true;
            for (c, &v) in r.iter().enumerate() {
                min[c] = min[c].min(v as f64);
                max[c] = max[c].max(v as f64);
            }
        }
        if !seen && width > 0 {
            return Err(Error::Input("normalization fit over no rows".into()));
        }
        Ok(NormRecord { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    fn constant(&self, c: usize) -> bool {
        !(self.max[c] > self.min[c])
    }

    pub fn apply(&self, c: usize, v: f64) -> f64 {
        if self.constant(c) {
            0.5
        } else {
            (v - self.min[c]) / (self.max[c] - self.min[c])
        }
    }

    pub fn invert(&self, c: usize, v: f64) -> f64 {
        if self.constant(c) {
            self.min[c]
        } else {
            self.min[c] + v * (self.max[c] - self.min[c])
        }
    }

    /// Normalizes a row-major `n x width` buffer.
    pub fn apply_rows(&self, data: &[f64]) -> Vec<f64> {
        let w = self.width().max(1);
        data.iter().enumerate().map(|(i, &v)| self.apply(i % w, v)).collect()
    }

    pub fn invert_rows(&self, data: &[f64]) -> Vec<f64> {
        let w = self.width().max(1);
        data.iter().enumerate().map(|(i, &v)| self.invert(i % w, v)).collect()
    }
}

/// Field statistics over the samples listed in `train` only.
pub fn normalize_fields(samples: &[Sample], train: &[usize]) -> Result<NormRecord> {
    let c = samples
        .first()
        .map(|s| s.channels)
        .ok_or_else(|| Error::Input("no samples to normalize".into()))?;
    let mut rows: Vec<&[f32]> = Vec::new();
    for &i in train {
        let s = samples
            .get(i)
            .ok_or_else(|| Error::Input(format!("train index {i} out of range")))?;
        rows.extend(s.field.chunks_exact(c));
    }
    NormRecord::fit(c, rows)
}
