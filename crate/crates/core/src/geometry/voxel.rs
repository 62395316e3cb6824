use super::grid::RegularGrid;
use crate::error::{Error, Result};

/// Maximum voxel resolution per axis.
pub const MAX_VOXELS: usize = 100;

/// Cell of `p` when `grid.dims` cells tile `[lo, hi]`; points outside or on
/// the max bound clamp to the boundary cells.
pub fn voxel_index(p: &[f64; 3], grid: &RegularGrid) -> [usize; 3] {
    std::array::from_fn(|a| {
        let n = grid.dims[a];
        let cell = (grid.hi[a] - grid.lo[a]) / n as f64;
        let t = ((p[a] - grid.lo[a]) / cell).floor();
        if t < 0.0 {
            0
        } else {
            (t as usize).min(n - 1)
        }
    })
}

/// Occupancy (1 or 0) per cell in grid storage order.
pub fn voxelize(coords: &[[f64; 3]], grid: &RegularGrid) -> Result<Vec<f64>> {
    grid.validate()?;
    if grid.dims.iter().any(|&d| d > MAX_VOXELS) {
        return Err(Error::config(format!(
            "voxel resolution {:?} exceeds {MAX_VOXELS} per axis",
            grid.dims
        )));
    }
    let mut occ = vec![0.0; grid.len()];
    for p in coords {
        let [i, j, k] = voxel_index(p, grid);
        occ[grid.index(i, j, k)] = 1.0;
    }
    Ok(occ)
}
