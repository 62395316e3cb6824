//! Graph family: GNO and edge-augmented GNO.

use rand::Rng;

use super::{DataDims, ModelConfig, OpInput, Operator};
use crate::diffcore::{mlp_forward, Activation, Dense, LayerSpec, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{augment_edges, knn_neighbors, Graph};

/// Seed for the random long-range edges of EA-GNO.
const AUGMENT_SEED: u64 = 0x9e37_79b9;

/// One graph convolution: `v'_i = sum_{j in N(i)} mp(v_j, v_i[, x_j - x_i]) * f(v_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConv {
    pub mp: Mlp,
    pub f: Mlp,
    pub edge_geometry: bool,
}

impl GraphConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        edge_geometry: bool,
        mp_channels: bool,
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let pair = 2 * width + if edge_geometry { 3 } else { 0 };
        let mp_out = if mp_channels { width } else { 1 };
        Ok(GraphConv {
            mp: Mlp::new(store, &format!("{name}.mp"), &[pair, width, mp_out], act, Activation::Identity, rng)?,
            f: Mlp::new(store, &format!("{name}.f"), &[width, width], Activation::Identity, Activation::Identity, rng)?,
            edge_geometry,
        })
    }
}

/// Applies one [`GraphConv`]; `graph` lists each node's senders.
pub fn graph_conv(tape: &mut Tape, store: &ParamStore, graph: &Graph, v: Var, coords: &[[f64; 3]], layer: &GraphConv) -> Result<Var> {
    let n = tape.value(v).rows();
    if graph.n != n {
        return Err(Error::shape(format!("graph has {} nodes, features have {n} rows", graph.n)));
    }
    graph.validate(n)?;
    let d = layer.f.out_dim();
    let fv = mlp_forward(tape, v, &layer.f.layers, store)?;
    let (recv, send) = graph.edge_pairs();
    if recv.is_empty() {
        return Ok(tape.constant(Tensor::zeros(&[n, d])));
    }
    let vj = tape.gather_rows(v, send.clone())?;
    let vi = tape.gather_rows(v, recv.clone())?;
    let pair = if layer.edge_geometry {
        if coords.len() != n {
            return Err(Error::shape(format!("{} coordinates for {n} nodes", coords.len())));
        }
        let mut disp = Vec::with_capacity(recv.len() * 3);
        for (&i, &j) in recv.iter().zip(&send) {
            for a in 0..3 {
                disp.push(coords[j][a] - coords[i][a]);
            }
        }
        let dv = tape.constant(Tensor::matrix(recv.len(), 3, disp)?);
        tape.concat_cols(&[vj, vi, dv])?
    } else {
        tape.concat_cols(&[vj, vi])?
    };
    let w = mlp_forward(tape, pair, &layer.mp.layers, store)?;
    let fj = tape.gather_rows(fv, send)?;
    let msg = if layer.mp.out_dim() == 1 { tape.mul_col(fj, w)? } else { tape.mul(fj, w)? };
    tape.scatter_add_rows(msg, recv, n)
}

/// Lift, stacked graph convolutions, head. With `augment`, random
/// long-range edges are added to the kNN graph first.
#[derive(Debug, Clone, PartialEq)]
pub struct Gno {
    pub lift: Dense,
    pub convs: Vec<GraphConv>,
    pub head: Mlp,
    pub act: Activation,
    pub knn: usize,
    pub augment: bool,
    pub extra_edges: Option<usize>,
}

impl Gno {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        dims: &DataDims,
        in_dim: usize,
        augment: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let h = cfg.hidden();
        let act = cfg.activation();
        if cfg.knn == 0 {
            return Err(Error::config("knn must be at least 1"));
        }
        let lift = Dense::new(store, "lift", LayerSpec::affine(in_dim, h, act), rng)?;
        let convs = (0..cfg.layers)
            .map(|l| GraphConv::new(store, &format!("gc.{l}"), h, cfg.edge_geometry, cfg.mp_channels, act, rng))
            .collect::<Result<_>>()?;
        let head = Mlp::new(store, "head", &[h, h, dims.channels], act, cfg.out_activation, rng)?;
        Ok(Gno {
            lift,
            convs,
            head,
            act,
            knn: cfg.knn,
            augment,
            extra_edges: cfg.extra_edges,
        })
    }

    /// Connectivity used for `coords`: supplied edges or kNN, plus optional
    /// augmentation, plus self-loops.
    pub fn build_graph(&self, coords: &[[f64; 3]], given: Option<&Graph>) -> Result<Graph> {
        let n = coords.len();
        let base = match given {
            Some(g) => g.clone(),
            None if n > 1 => knn_neighbors(coords, self.knn.min(n - 1))?,
            None => Graph::from_lists(vec![Vec::new(); n]),
        };
        let g = if self.augment {
            augment_edges(&base, self.extra_edges.unwrap_or(n / 4), AUGMENT_SEED).0
        } else {
            base
        };
        Ok(g.with_self_loops())
    }
}

impl Operator for Gno {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let g = self.build_graph(x.coords, x.graph)?;
        let mut v = self.lift.forward(tape, store, x.feats)?;
        for c in &self.convs {
            let y = graph_conv(tape, store, &g, v, x.coords, c)?;
            v = tape.act(y, self.act);
        }
        mlp_forward(tape, v, &self.head.layers, store)
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}
