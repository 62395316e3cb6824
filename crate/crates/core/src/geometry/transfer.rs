use super::graph::Graph;
use super::grid::RegularGrid;
use super::neighbors::radius_neighbors;
use crate::diffcore::{mlp_forward, Mlp, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// The two learnable maps of a radius aggregation: `mp` weighs a
/// (source, destination) feature pair, `f` transforms the source feature.
/// `mp` may emit one scalar per pair or one weight per `f` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMaps {
    pub mp: Mlp,
    pub f: Mlp,
}

impl PairMaps {
    pub fn out_dim(&self) -> usize {
        self.f.out_dim()
    }
}

/// `out_d = sum_{s in graph[d]} mp(src_s, dst_d) * f(src_s)`; destinations
/// with empty lists get zeros.
pub fn transfer_with_graph(
    tape: &mut Tape,
    store: &ParamStore,
    graph: &Graph,
    src_feat: Var,
    dst_feat: Var,
    maps: &PairMaps,
) -> Result<Var> {
    let n_src = tape.value(src_feat).rows();
    let n_dst = tape.value(dst_feat).rows();
    if graph.n != n_dst {
        return Err(Error::shape(format!("graph has {} lists for {n_dst} destinations", graph.n)));
    }
    graph.validate(n_src)?;
    let d = maps.f.out_dim();
    let mp_out = maps.mp.out_dim();
    if mp_out != 1 && mp_out != d {
        return Err(Error::shape(format!("mp emits {mp_out} weights for {d} channels")));
    }
    let f = mlp_forward(tape, src_feat, &maps.f.layers, store)?;
    let (recv, send) = graph.edge_pairs();
    if recv.is_empty() {
        let pair_in = tape.value(src_feat).cols() + tape.value(dst_feat).cols();
        if pair_in != maps.mp.in_dim() {
            return Err(Error::shape(format!(
                "mp expects {} input features, got {pair_in}",
                maps.mp.in_dim()
            )));
        }
        return Ok(tape.constant(Tensor::zeros(&[n_dst, d])));
    }
    let gs = tape.gather_rows(src_feat, send.clone())?;
    let gd = tape.gather_rows(dst_feat, recv.clone())?;
    let pair = tape.concat_cols(&[gs, gd])?;
    let w = mlp_forward(tape, pair, &maps.mp.layers, store)?;
    let fs = tape.gather_rows(f, send)?;
    let msg = if mp_out == 1 { tape.mul_col(fs, w)? } else { tape.mul(fs, w)? };
    tape.scatter_add_rows(msg, recv, n_dst)
}

/// Radius-limited aggregation from `src` points onto `dst` points.
#[allow(clippy::too_many_arguments)]
pub fn radius_transfer(
    tape: &mut Tape,
    store: &ParamStore,
    src_coords: &[[f64; 3]],
    src_feat: Var,
    dst_coords: &[[f64; 3]],
    dst_feat: Var,
    r: f64,
    maps: &PairMaps,
) -> Result<Var> {
    let g = radius_neighbors(src_coords, dst_coords, r)?;
    transfer_with_graph(tape, store, &g, src_feat, dst_feat, maps)
}

/// Encodes point features onto grid nodes.
#[allow(clippy::too_many_arguments)]
pub fn points_to_grid(
    tape: &mut Tape,
    store: &ParamStore,
    coords: &[[f64; 3]],
    point_feat: Var,
    grid: &RegularGrid,
    grid_feat: Var,
    r: f64,
    maps: &PairMaps,
) -> Result<Var> {
    radius_transfer(tape, store, coords, point_feat, &grid.coords(), grid_feat, r, maps)
}

/// Decodes grid features at query points.
#[allow(clippy::too_many_arguments)]
pub fn grid_to_points(
    tape: &mut Tape,
    store: &ParamStore,
    grid: &RegularGrid,
    grid_feat: Var,
    queries: &[[f64; 3]],
    query_feat: Var,
    r: f64,
    maps: &PairMaps,
) -> Result<Var> {
    radius_transfer(tape, store, &grid.coords(), grid_feat, queries, query_feat, r, maps)
}
