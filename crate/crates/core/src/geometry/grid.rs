use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned lattice of `dims` nodes spanning `[lo, hi]` per axis.
/// Node features are stored channel-last with node index
/// `(i * ny + j) * nz + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularGrid {
    pub dims: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl RegularGrid {
    pub fn new(dims: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        let g = RegularGrid { dims, lo, hi };
        g.validate()?;
        Ok(g)
    }

    pub fn unit(n: usize) -> Result<Self> {
        RegularGrid::new([n; 3], [0.0; 3], [1.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::config(format!("grid extents must be >= 2, got {:?}", self.dims)));
        }
        for a in 0..3 {
            if !(self.lo[a] < self.hi[a]) || !self.lo[a].is_finite() || !self.hi[a].is_finite() {
                return Err(Error::config(format!(
                    "grid bounds on axis {a} must satisfy min < max, got [{}, {}]",
                    self.lo[a], self.hi[a]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.hi[a] - self.lo[a]) / (self.dims[a] - 1) as f64)
    }

    pub fn median_spacing(&self) -> f64 {
        let mut s = self.spacing();
        s.sort_by(f64::total_cmp);
        s[1]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            self.lo[0] + i as f64 * h[0],
            self.lo[1] + j as f64 * h[1],
            self.lo[2] + k as f64 * h[2],
        ]
    }

    /// All node coordinates in storage order.
    pub fn coords(&self) -> Vec<[f64; 3]> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    out.push(self.node(i, j, k));
                }
            }
        }
        out
    }
}
