use super::graph::Graph;
use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// For each query, the indices of cloud points within distance `r` (inclusive).
/// The returned graph has one list per query.
pub fn radius_neighbors(cloud: &[[f64; 3]], queries: &[[f64; 3]], r: f64) -> Result<Graph> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::config(format!("radius must be positive, got {r}")));
    }
    let tree = KdTree::new(cloud);
    let r2 = r * r;
    let lists = par::map(Exec::available(), queries, |q| tree.within(q, r2));
    Ok(Graph::from_lists(lists))
}

/// Each point's `k` nearest other points, ordered by distance with ties to
/// the lower index.
pub fn knn_neighbors(cloud: &[[f64; 3]], k: usize) -> Result<Graph> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::config(format!("knn needs 1 <= k < N, got k = {k}, N = {n}")));
    }
    let tree = KdTree::new(cloud);
    let lists = par::map_range(Exec::available(), n, |i| tree.nearest(&cloud[i], k, Some(i)));
    Ok(Graph::from_lists(lists))
}
