use serde::{Deserialize, Serialize};

/// Per-axis affine map recorded by [`normalize_box`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTransform {
    pub src_lo: [f64; 3],
    pub src_hi: [f64; 3],
    pub dst_lo: [f64; 3],
    pub dst_hi: [f64; 3],
    /// Axes with zero source extent; they map to the target midpoint.
    pub degenerate: [bool; 3],
}

impl BoxTransform {
    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| {
            if self.degenerate[a] {
                0.5 * (self.dst_lo[a] + self.dst_hi[a])
            } else {
                let s = (self.dst_hi[a] - self.dst_lo[a]) / (self.src_hi[a] - self.src_lo[a]);
                self.dst_lo[a] + (p[a] - self.src_lo[a]) * s
            }
        })
    }

    pub fn inverse(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| {
            if self.degenerate[a] {
                self.src_lo[a]
            } else {
                let s = (self.src_hi[a] - self.src_lo[a]) / (self.dst_hi[a] - self.dst_lo[a]);
                self.src_lo[a] + (p[a] - self.dst_lo[a]) * s
            }
        })
    }
}

/// Maps the bounding box of `coords` onto `[lo, hi]` axis by axis.
pub fn normalize_box(coords: &[[f64; 3]], lo: [f64; 3], hi: [f64; 3]) -> (Vec<[f64; 3]>, BoxTransform) {
    let (src_lo, src_hi) = super::bounds(coords);
    let t = BoxTransform {
        src_lo,
        src_hi,
        dst_lo: lo,
        dst_hi: hi,
        degenerate: std::array::from_fn(|a| !(src_hi[a] > src_lo[a])),
    };
    (coords.iter().map(|p| t.apply(p)).collect(), t)
}
