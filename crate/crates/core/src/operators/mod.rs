//! Operator families. Every architecture predicts one row of field channels
//! per query point; the query points double as the point cloud for the graph,
//! grid and point families.

mod branch_trunk;
mod graph;
mod grid;
mod point;

pub use branch_trunk::{time_encoding, BranchKind, DcOnHead, Dcon, DeepONet, Gano, SeqBranchKind, SeqDeepONet, TIME_ENCODING};
pub use graph::{graph_conv, GraphConv, Gno};
pub use grid::{fourier_layer, upsample_index, FigConv, FourierLayer, Gino, Plane, UNet2};
pub use point::{Gnot, PointNet, SliceState, Transolver};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, ParamId, ParamStore, Tape, Tensor, Var};
use crate::enhancements::{Fusion, FusionConfig};
use crate::error::{Error, Result};
use crate::geometry::{canonical_order, coords_tensor, Graph};

/// Registered architecture names, in report order.
pub const ARCHITECTURES: [&str; 13] = [
    "deeponet",
    "geom-deeponet",
    "s-deeponet",
    "s-not",
    "dcon",
    "gano",
    "gno",
    "ea-gno",
    "gino",
    "figconv",
    "pointnet",
    "gnot",
    "transolver",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BranchTrunk,
    Graph,
    Grid,
    Point,
}

impl Family {
    pub fn of(arch: &str) -> Result<Family> {
        Ok(match arch {
            "deeponet" | "geom-deeponet" | "s-deeponet" | "s-not" | "dcon" | "gano" => Family::BranchTrunk,
            "gno" | "ea-gno" => Family::Graph,
            "gino" | "figconv" => Family::Grid,
            "pointnet" | "gnot" | "transolver" => Family::Point,
            _ => {
                return Err(Error::config(format!(
                    "unknown model `{arch}`; expected one of {}",
                    ARCHITECTURES.join(", ")
                )))
            }
        })
    }

    /// Hidden width used when the config leaves it unset.
    pub fn default_hidden(self) -> usize {
        match self {
            Family::BranchTrunk => 128,
            Family::Graph => 32,
            Family::Grid => 16,
            Family::Point => 128,
        }
    }

    pub fn default_activation(self) -> Activation {
        match self {
            Family::BranchTrunk | Family::Point => Activation::Gelu,
            Family::Graph | Family::Grid => Activation::Relu,
        }
    }
}

/// Lattice used by the grid family, in normalized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

/// Architecture hyperparameters. `None` fields fall back to family defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arch: String,
    pub layers: usize,
    pub hidden: Option<usize>,
    pub activation: Option<Activation>,
    pub out_activation: Activation,
    /// Attention temperature; `sqrt(d_head)` when unset.
    pub tau: Option<f64>,
    /// Transolver slice count M.
    pub slices: usize,
    /// Retained Fourier modes per axis.
    pub modes: [usize; 3],
    /// Transfer radius for GINO/FigConv; twice the median grid spacing when unset.
    pub radius: Option<f64>,
    pub grid: Option<GridSpec>,
    /// Graph degree for GNO/EA-GNO.
    pub knn: usize,
    /// EA-GNO extra undirected edges; `N / 4` when unset.
    pub extra_edges: Option<usize>,
    /// Feed `x_j - x_i` into the GNO message map.
    pub edge_geometry: bool,
    /// Message map emits one weight per channel instead of a scalar.
    pub mp_channels: bool,
    /// Drop the Fourier layer's pointwise bypass and activation.
    pub spectral_only: bool,
    pub omega0: f64,
    /// Attention heads in the S-NOT branch.
    pub heads: usize,
    /// DCON/GANO output head.
    pub dcon_head: DcOnHead,
    pub unet_depth: usize,
    pub fusion: FusionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: "deeponet".into(),
            layers: 3,
            hidden: None,
            activation: None,
            out_activation: Activation::Identity,
            tau: None,
            slices: 8,
            modes: [8, 8, 8],
            radius: None,
            grid: None,
            knn: 8,
            extra_edges: None,
            edge_geometry: true,
            mp_channels: true,
            spectral_only: false,
            omega0: 30.0,
            heads: 2,
            dcon_head: DcOnHead::Affine,
            unet_depth: 2,
            fusion: FusionConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn new(arch: &str) -> Result<Self> {
        Family::of(arch)?;
        Ok(ModelConfig {
            arch: arch.to_string(),
            ..ModelConfig::default()
        })
    }

    pub fn family(&self) -> Result<Family> {
        Family::of(&self.arch)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
            .unwrap_or_else(|| self.family().map(Family::default_hidden).unwrap_or(32))
    }

    pub fn activation(&self) -> Activation {
        self.activation
            .unwrap_or_else(|| self.family().map(Family::default_activation).unwrap_or(Activation::Gelu))
    }

    /// `[inp, hidden x layers, out]`.
    pub(crate) fn mlp_dims(&self, inp: usize, out: usize) -> Vec<usize> {
        let mut d = vec![inp];
        d.extend(std::iter::repeat_n(self.hidden(), self.layers.max(1)));
        d.push(out);
        d
    }
}

/// Shapes a dataset presents to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDims {
    pub geo_dim: usize,
    pub load_dim: usize,
    pub channels: usize,
    /// Coordinate bounds the models see (normalized space).
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Dataset grid shape, used when the model config has no grid.
    pub grid: [usize; 3],
}

impl DataDims {
    pub fn new(geo_dim: usize, load_dim: usize, channels: usize) -> Self {
        DataDims {
            geo_dim,
            load_dim,
            channels,
            lo: [0.0; 3],
            hi: [1.0; 3],
            grid: [8, 8, 8],
        }
    }

    /// Length of the static parameter vector `params ++ loads`.
    pub fn static_dim(&self) -> usize {
        self.geo_dim + self.load_dim
    }
}

/// One forward request: predict at `coords`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelInput {
    pub coords: Vec<[f64; 3]>,
    pub params: Vec<f64>,
    pub loads: Vec<f64>,
    /// Whole-sample cloud for geometry encoders; `coords` when absent.
    pub geometry: Option<Arc<Vec<[f64; 3]>>>,
    /// Precomputed connectivity over `coords`, used by the graph family.
    pub edges: Option<Graph>,
}

impl ModelInput {
    pub fn new(coords: Vec<[f64; 3]>, params: Vec<f64>, loads: Vec<f64>) -> Self {
        ModelInput {
            coords,
            params,
            loads,
            geometry: None,
            edges: None,
        }
    }

    /// `params ++ loads`.
    pub fn static_vector(&self) -> Vec<f64> {
        let mut v = self.params.clone();
        v.extend_from_slice(&self.loads);
        v
    }
}

/// What an architecture receives after canonical reordering and fusion.
pub struct OpInput<'a> {
    /// Query coordinates in canonical order.
    pub coords: &'a [[f64; 3]],
    /// Per-point features `N x in_dim` (coordinates plus fused parameters).
    pub feats: Var,
    /// Branch input row `[params ++ loads ++ geometry latent]`, if non-empty.
    pub branch: Option<Var>,
    pub params: &'a [f64],
    pub loads: &'a [f64],
    /// Geometry cloud in canonical order.
    pub geometry: &'a [[f64; 3]],
    pub graph: Option<&'a Graph>,
}

pub trait Operator: Send + Sync {
    /// `N x channels` predictions.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var>;

    /// The order-independent summary of the input (pooled feature, slice
    /// tokens), where the architecture has one.
    fn probe(&self, _tape: &mut Tape, _store: &ParamStore, _x: &OpInput) -> Result<Option<Var>> {
        Ok(None)
    }

    /// Bias of the final output layer.
    fn output_bias(&self) -> ParamId;
}

/// An architecture with its parameters.
pub struct Model {
    pub config: ModelConfig,
    pub dims: DataDims,
    pub seed: u64,
    pub store: ParamStore,
    fusion: Fusion,
    op: Box<dyn Operator>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("arch", &self.config.arch)
            .field("params", &self.store.count())
            .finish()
    }
}

impl Clone for Model {
    fn clone(&self) -> Self {
        let mut m = Model::build(&self.config, &self.dims, self.seed).expect("config was valid");
        m.store = self.store.clone();
        m
    }
}

impl Model {
    /// Builds and initializes `config.arch` for data shaped like `dims`.
    pub fn build(config: &ModelConfig, dims: &DataDims, seed: u64) -> Result<Model> {
        let family = config.family()?;
        if config.layers == 0 {
            return Err(Error::config("layer count must be at least 1"));
        }
        if config.hidden() == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        if dims.channels == 0 {
            return Err(Error::config("dataset has no field channels"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let hidden = config.hidden();
        config.fusion.validate(&config.arch, family, dims)?;
        let fusion = Fusion::build(&mut store, &config.fusion, dims, hidden, config.activation(), &mut rng)?;
        let in_dim = 3 + fusion.point_extra();
        let branch_dim = dims.static_dim() + fusion.branch_extra();
        let op: Box<dyn Operator> = match config.arch.as_str() {
            "deeponet" => Box::new(DeepONet::new(&mut store, config, dims, branch_dim, BranchKind::Mlp, &mut rng)?),
            "geom-deeponet" => Box::new(DeepONet::new(&mut store, config, dims, branch_dim, BranchKind::Siren, &mut rng)?),
            "s-deeponet" => Box::new(SeqDeepONet::new(&mut store, config, dims, SeqBranchKind::Gru, &mut rng)?),
            "s-not" => Box::new(SeqDeepONet::new(&mut store, config, dims, SeqBranchKind::Attention, &mut rng)?),
            "dcon" => Box::new(Dcon::new(&mut store, config, dims, branch_dim, &mut rng)?),
            "gano" => Box::new(Gano::new(&mut store, config, dims, branch_dim, &mut rng)?),
            "gno" => Box::new(Gno::new(&mut store, config, dims, in_dim, false, &mut rng)?),
            "ea-gno" => Box::new(Gno::new(&mut store, config, dims, in_dim, true, &mut rng)?),
            "gino" => Box::new(Gino::new(&mut store, config, dims, in_dim, &mut rng)?),
            "figconv" => Box::new(FigConv::new(&mut store, config, dims, in_dim, &mut rng)?),
            "pointnet" => Box::new(PointNet::new(&mut store, config, dims, in_dim, &mut rng)?),
            "gnot" => Box::new(Gnot::new(&mut store, config, dims, in_dim, &mut rng)?),
            "transolver" => Box::new(Transolver::new(&mut store, config, dims, in_dim, &mut rng)?),
            other => return Err(Error::config(format!("unknown model `{other}`"))),
        };
        Ok(Model {
            config: config.clone(),
            dims: dims.clone(),
            seed,
            store,
            fusion,
            op,
        })
    }

    pub fn arch(&self) -> &str {
        &self.config.arch
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    pub fn output_bias(&self) -> ParamId {
        self.op.output_bias()
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.coords.is_empty() {
            return Err(Error::Input("no query points".into()));
        }
        if input.params.len() != self.dims.geo_dim || input.loads.len() != self.dims.load_dim {
            return Err(Error::shape(format!(
                "model expects {} params and {} loads, got {} and {}",
                self.dims.geo_dim,
                self.dims.load_dim,
                input.params.len(),
                input.loads.len()
            )));
        }
        Ok(())
    }

    /// Canonically reorders the input, applies fusion and hands the result
    /// to `f`. Returns `f`'s value and the ordering used.
    fn with_prepared<R>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &ModelInput,
        f: impl FnOnce(&mut Tape, &OpInput) -> Result<R>,
    ) -> Result<(R, Vec<usize>)> {
        self.check_input(input)?;
        let order = canonical_order(&input.coords);
        let coords: Vec<[f64; 3]> = order.iter().map(|&i| input.coords[i]).collect();
        let geometry_src: &[[f64; 3]] = input.geometry.as_deref().map(|g| g.as_slice()).unwrap_or(&input.coords);
        let geometry: Vec<[f64; 3]> = canonical_order(geometry_src).iter().map(|&i| geometry_src[i]).collect();
        let graph = input.edges.as_ref().map(|g| g.permuted(&order));
        let stat = input.static_vector();
        let base = tape.constant(coords_tensor(&coords));
        let feats = self.fusion.point_features(tape, store, base, &stat)?;
        let branch = self.fusion.branch_input(tape, store, &stat, &geometry)?;
        let x = OpInput {
            coords: &coords,
            feats,
            branch,
            params: &input.params,
            loads: &input.loads,
            geometry: &geometry,
            graph: graph.as_ref(),
        };
        Ok((f(tape, &x)?, order))
    }

    /// Forward pass with an explicit parameter store (used by gradient checks).
    pub fn forward_with(&self, tape: &mut Tape, store: &ParamStore, input: &ModelInput) -> Result<Var> {
        let (y, order) = self.with_prepared(tape, store, input, |t, x| self.op.forward(t, store, x))?;
        let mut inv = vec![0; order.len()];
        for (k, &o) in order.iter().enumerate() {
            inv[o] = k;
        }
        tape.gather_rows(y, inv)
    }

    pub fn forward(&self, tape: &mut Tape, input: &ModelInput) -> Result<Var> {
        self.forward_with(tape, &self.store, input)
    }

    /// Order-independent summary (pooled geometry feature, PointNet global
    /// feature or Transolver slice tokens); `None` for other architectures.
    pub fn probe(&self, tape: &mut Tape, input: &ModelInput) -> Result<Option<Var>> {
        let store = &self.store;
        Ok(self.with_prepared(tape, store, input, |t, x| self.op.probe(t, store, x))?.0)
    }

    /// Plain evaluation returning `N x channels` values.
    pub fn predict(&self, input: &ModelInput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, input)?;
        Ok(tape.value(y).clone())
    }
}

/// Builds a constant `(c*h) x c` matrix that sums each block of `h` columns.
pub(crate) fn group_sum_matrix(h: usize, c: usize) -> Tensor {
    let mut m = vec![0.0; c * h * c];
    for g in 0..c {
        for j in 0..h {
            m[(g * h + j) * c + g] = 1.0;
        }
    }
    Tensor::matrix(c * h, c, m).expect("group sum shape")
}
