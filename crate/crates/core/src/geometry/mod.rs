//! Spatial kernels shared by the operator families: neighbor search,
//! lattices, voxel occupancy, shape descriptors, point/grid feature transfer
//! and coordinate normalization.

mod descriptors;
mod graph;
mod grid;
mod kdtree;
mod neighbors;
mod normalize;
mod transfer;
mod voxel;

pub use descriptors::{descriptors, GeoDescriptor, DESCRIPTOR_LEN};
pub use graph::{augment_edges, AugmentReport, Graph};
pub use grid::RegularGrid;
pub use kdtree::{dist2, KdTree};
pub use neighbors::{knn_neighbors, radius_neighbors};
pub use normalize::{normalize_box, BoxTransform};
pub use transfer::{grid_to_points, points_to_grid, radius_transfer, transfer_with_graph, PairMaps};
pub use voxel::{voxel_index, voxelize, MAX_VOXELS};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Point coordinates with optional per-point feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub coords: Vec<[f64; 3]>,
    pub features: Option<Tensor>,
}

impl PointCloud {
    pub fn new(coords: Vec<[f64; 3]>) -> Result<Self> {
        let c = PointCloud { coords, features: None };
        c.validate()?;
        Ok(c)
    }

    pub fn with_features(coords: Vec<[f64; 3]>, features: Tensor) -> Result<Self> {
        let c = PointCloud {
            coords,
            features: Some(features),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.is_empty() {
            return Err(Error::Input("point cloud is empty".into()));
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("point cloud has non-finite coordinates".into()));
        }
        if let Some(f) = &self.features {
            if f.rows() != self.coords.len() {
                return Err(Error::shape(format!(
                    "{} feature rows for {} points",
                    f.rows(),
                    self.coords.len()
                )));
            }
        }
        Ok(())
    }

    /// Coordinates as an `N x 3` tensor.
    pub fn coord_tensor(&self) -> Tensor {
        coords_tensor(&self.coords)
    }

    /// Per-axis (min, max).
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        bounds(&self.coords)
    }
}

pub fn coords_tensor(coords: &[[f64; 3]]) -> Tensor {
    Tensor::matrix(coords.len(), 3, coords.iter().flatten().copied().collect()).expect("N x 3")
}

pub fn bounds(coords: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in coords {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Indices that sort `coords` lexicographically (ties by index).
pub fn canonical_order(coords: &[[f64; 3]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (&coords[a], &coords[b]);
        p[0].total_cmp(&q[0])
            .then(p[1].total_cmp(&q[1]))
            .then(p[2].total_cmp(&q[2]))
            .then(a.cmp(&b))
    });
    idx
}
