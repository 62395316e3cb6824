use nalgebra::{Matrix3, SymmetricEigen};

use super::canonical_order;

/// Length of [`GeoDescriptor::to_vec`].
pub const DESCRIPTOR_LEN: usize = 18;

/// Summary statistics of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoDescriptor {
    pub centroid: [f64; 3],
    pub bbox: [f64; 3],
    /// Principal axes as rows, ordered like `eigenvalues`.
    pub axes: [[f64; 3]; 3],
    /// Covariance eigenvalues, descending and non-negative.
    pub eigenvalues: [f64; 3],
}

impl GeoDescriptor {
    /// `(centroid, bbox, axes row-major, eigenvalues)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(DESCRIPTOR_LEN);
        v.extend_from_slice(&self.centroid);
        v.extend_from_slice(&self.bbox);
        for a in &self.axes {
            v.extend_from_slice(a);
        }
        v.extend_from_slice(&self.eigenvalues);
        v
    }
}

/// Centroid, extents and PCA of `coords` (population covariance). Sums run in
/// lexicographic point order so the result does not depend on input order.
pub fn descriptors(coords: &[[f64; 3]]) -> GeoDescriptor {
    let n = coords.len().max(1) as f64;
    let order = canonical_order(coords);
    let mut c = [0.0; 3];
    for &i in &order {
        for a in 0..3 {
            c[a] += coords[i][a];
        }
    }
    c.iter_mut().for_each(|v| *v /= n);
    let (lo, hi) = super::bounds(coords);
    let bbox = if coords.is_empty() {
        [0.0; 3]
    } else {
        std::array::from_fn(|a| hi[a] - lo[a])
    };
    let mut cov = Matrix3::<f64>::zeros();
    for &i in &order {
        let d = [coords[i][0] - c[0], coords[i][1] - c[1], coords[i][2] - c[2]];
        for r in 0..3 {
            for s in 0..3 {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = [[0.0; 3]; 3];
    let mut eigenvalues = [0.0; 3];
    for (r, &k) in idx.iter().enumerate() {
        eigenvalues[r] = eig.eigenvalues[k].max(0.0);
        let col = eig.eigenvectors.column(k);
        let mut v = [col[0], col[1], col[2]];
        let big = (0..3).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes[r] = v;
    }
    GeoDescriptor {
        centroid: c,
        bbox,
        axes,
        eigenvalues,
    }
}
