//! Adapters that let branch-trunk models see freeform geometry and let
//! geometric operators see the design parameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{mlp_forward, Activation, Conv3, Dense, LayerSpec, Mlp, Padding, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{descriptors, voxelize, RegularGrid, DESCRIPTOR_LEN};
use crate::operators::{DataDims, Family};

/// How design parameters reach a geometric operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    #[default]
    None,
    /// Append `p` to every point's input features.
    Concat,
    /// Append an MLP embedding of `p` to every point's input features.
    Branch,
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FusionMode::None),
            "concat" => Ok(FusionMode::Concat),
            "branch" => Ok(FusionMode::Branch),
            _ => Err(Error::config(format!("unknown fusion `{s}` (none|concat|branch)"))),
        }
    }
}

/// Geometry summary fed to a branch network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GeoEncoding {
    #[default]
    None,
    Desc,
    /// Occupancy grid with this many cells per axis.
    Voxel(usize),
}

impl FromStr for GeoEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GeoEncoding::None),
            "desc" => Ok(GeoEncoding::Desc),
            _ => s
                .strip_prefix("voxel")
                .and_then(|n| n.parse().ok())
                .map(GeoEncoding::Voxel)
                .ok_or_else(|| Error::config(format!("unknown geometry encoding `{s}` (none|desc|voxelN)"))),
        }
    }
}

impl fmt::Display for GeoEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoEncoding::None => write!(f, "none"),
            GeoEncoding::Desc => write!(f, "desc"),
            GeoEncoding::Voxel(n) => write!(f, "voxel{n}"),
        }
    }
}

impl TryFrom<String> for GeoEncoding {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GeoEncoding> for String {
    fn from(g: GeoEncoding) -> String {
        g.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub geoenc: GeoEncoding,
}

impl FusionConfig {
    pub fn validate(&self, arch: &str, family: Family, dims: &DataDims) -> Result<()> {
        if self.mode != FusionMode::None {
            if family == Family::BranchTrunk {
                return Err(Error::config(format!(
                    "`{arch}` already consumes parameters in its branch; fusion applies to geometric operators"
                )));
            }
            if dims.static_dim() == 0 {
                return Err(Error::config("parametric fusion needs a parameter vector, but the dataset has none"));
            }
        }
        match self.geoenc {
            GeoEncoding::None => {}
            _ if !matches!(arch, "deeponet" | "geom-deeponet" | "dcon" | "gano") => {
                return Err(Error::config(format!(
                    "geometry encodings feed a static branch network; `{arch}` has none"
                )))
            }
            GeoEncoding::Voxel(n) if n > crate::geometry::MAX_VOXELS => {
                return Err(Error::config(format!(
                    "voxel resolution {n} exceeds the cap of {}",
                    crate::geometry::MAX_VOXELS
                )))
            }
            GeoEncoding::Voxel(n) if n < 2 => {
                return Err(Error::config(format!("voxel resolution {n} is below 2")))
            }
            _ => {}
        }
        Ok(())
    }
}

/// `[x_q, p]` for every row of `xq`.
pub fn concat_params(xq: &Tensor, p: Option<&[f64]>) -> Result<Tensor> {
    let p = p.ok_or_else(|| Error::config("direct concatenation needs a parameter vector"))?;
    let (n, d) = (xq.rows(), xq.cols());
    let mut out = Vec::with_capacity(n * (d + p.len()));
    for r in 0..n {
        out.extend_from_slice(xq.row_slice(r));
        out.extend_from_slice(p);
    }
    Tensor::matrix(n, d + p.len(), out)
}

/// MLP embedding of `p` appended to each feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFuse {
    pub mlp: Mlp,
}

impl BranchFuse {
    pub fn new<R: Rng>(store: &mut ParamStore, q: usize, width: usize, act: Activation, rng: &mut R) -> Result<Self> {
        Ok(BranchFuse {
            mlp: Mlp::new(store, "fuse", &[q, width, width], act, act, rng)?,
        })
    }

    pub fn width(&self) -> usize {
        self.mlp.out_dim()
    }
}

/// `concat(feats, repeat(MLP(p)))`.
pub fn branch_fuse(tape: &mut Tape, store: &ParamStore, feats: Var, p: Option<&[f64]>, fuse: &BranchFuse) -> Result<Var> {
    let p = p.ok_or_else(|| Error::config("branch fusion needs a parameter vector"))?;
    let n = tape.value(feats).rows();
    let pv = tape.constant(Tensor::row(p.to_vec()));
    let e = mlp_forward(tape, pv, &fuse.mlp.layers, store)?;
    let rep = tape.repeat_rows(e, n)?;
    tape.concat_cols(&[feats, rep])
}

/// Occupancy grid encoder: three stride-2 conv blocks, global average pool,
/// affine map to the latent.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelBranch {
    pub grid: RegularGrid,
    pub convs: Vec<Conv3>,
    pub head: Dense,
    pub act: Activation,
}

impl VoxelBranch {
    pub const CHANNELS: [usize; 3] = [8, 16, 32];

    pub fn new<R: Rng>(
        store: &mut ParamStore,
        res: usize,
        lo: [f64; 3],
        hi: [f64; 3],
        latent: usize,
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if res > crate::geometry::MAX_VOXELS {
            return Err(Error::config(format!("voxel resolution {res} exceeds the cap")));
        }
        let grid = RegularGrid::new([res; 3], lo, hi)?;
        let mut convs = Vec::new();
        let mut cin = 1;
        for (i, &c) in Self::CHANNELS.iter().enumerate() {
            convs.push(Conv3::new(store, &format!("geo.voxel.conv{i}"), cin, c, [3; 3], [2; 3], Padding::Same, rng)?);
            cin = c;
        }
        let head = Dense::new(store, "geo.voxel.head", LayerSpec::affine(cin, latent, Activation::Identity), rng)?;
        Ok(VoxelBranch { grid, convs, head, act })
    }

    /// Encodes an occupancy field laid out like `self.grid`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, occupancy: Tensor) -> Result<Var> {
        let mut x = tape.constant(occupancy.reshaped(vec![self.grid.len(), 1])?);
        let mut dims = self.grid.dims;
        for c in &self.convs {
            let (y, d) = c.forward(tape, store, x, dims)?;
            x = tape.act(y, self.act);
            dims = d;
        }
        let pooled = tape.mean_rows(x);
        self.head.forward(tape, store, pooled)
    }

    pub fn latent_dim(&self) -> usize {
        self.head.spec.out_dim
    }
}

/// `voxelize` followed by the encoder.
pub fn voxel_branch(tape: &mut Tape, store: &ParamStore, cloud: &[[f64; 3]], enc: &VoxelBranch) -> Result<Var> {
    let occ = voxelize(cloud, &enc.grid)?;
    enc.encode(tape, store, Tensor::row(occ))
}

/// Descriptor vector through an MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorBranch {
    pub mlp: Mlp,
}

impl DescriptorBranch {
    pub fn new<R: Rng>(store: &mut ParamStore, latent: usize, act: Activation, rng: &mut R) -> Result<Self> {
        Ok(DescriptorBranch {
            mlp: Mlp::new(store, "geo.desc", &[DESCRIPTOR_LEN, latent, latent], act, Activation::Identity, rng)?,
        })
    }
}

pub fn descriptor_branch(tape: &mut Tape, store: &ParamStore, cloud: &[[f64; 3]], enc: &DescriptorBranch) -> Result<Var> {
    let d = tape.constant(Tensor::row(descriptors(cloud).to_vec()));
    mlp_forward(tape, d, &enc.mlp.layers, store)
}

#[derive(Debug, Clone, PartialEq)]
enum GeoBranch {
    Desc(DescriptorBranch),
    Voxel(VoxelBranch),
}

/// The fusion pieces a model was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    mode: FusionMode,
    static_dim: usize,
    fuse: Option<BranchFuse>,
    geo: Option<GeoBranch>,
}

impl Fusion {
    pub(crate) fn build<R: Rng>(
        store: &mut ParamStore,
        cfg: &FusionConfig,
        dims: &DataDims,
        hidden: usize,
        act: Activation,
        rng: &mut R,
    ) -> Result<Fusion> {
        let fuse = match cfg.mode {
            FusionMode::Branch => Some(BranchFuse::new(store, dims.static_dim(), hidden, act, rng)?),
            _ => None,
        };
        let geo = match cfg.geoenc {
            GeoEncoding::None => None,
            GeoEncoding::Desc => Some(GeoBranch::Desc(DescriptorBranch::new(store, hidden, act, rng)?)),
            GeoEncoding::Voxel(n) => Some(GeoBranch::Voxel(VoxelBranch::new(store, n, dims.lo, dims.hi, hidden, act, rng)?)),
        };
        Ok(Fusion {
            mode: cfg.mode,
            static_dim: dims.static_dim(),
            fuse,
            geo,
        })
    }

    /// Extra per-point input columns.
    pub fn point_extra(&self) -> usize {
        match self.mode {
            FusionMode::None => 0,
            FusionMode::Concat => self.static_dim,
            FusionMode::Branch => self.fuse.as_ref().map(BranchFuse::width).unwrap_or(0),
        }
    }

    /// Extra branch input columns from the geometry encoder.
    pub fn branch_extra(&self) -> usize {
        match &self.geo {
            None => 0,
            Some(GeoBranch::Desc(d)) => d.mlp.out_dim(),
            Some(GeoBranch::Voxel(v)) => v.latent_dim(),
        }
    }

    pub(crate) fn point_features(&self, tape: &mut Tape, store: &ParamStore, base: Var, p: &[f64]) -> Result<Var> {
        match self.mode {
            FusionMode::None => Ok(base),
            FusionMode::Concat => {
                let t = concat_params(tape.value(base), Some(p))?;
                Ok(tape.constant(t))
            }
            FusionMode::Branch => branch_fuse(tape, store, base, Some(p), self.fuse.as_ref().expect("built with branch")),
        }
    }

    /// `[p ++ geometry latent]` as a `1 x d` row, or `None` when empty.
    pub(crate) fn branch_input(&self, tape: &mut Tape, store: &ParamStore, p: &[f64], geometry: &[[f64; 3]]) -> Result<Option<Var>> {
        let latent = match &self.geo {
            None => None,
            Some(GeoBranch::Desc(d)) => Some(descriptor_branch(tape, store, geometry, d)?),
            Some(GeoBranch::Voxel(v)) => Some(voxel_branch(tape, store, geometry, v)?),
        };
        let pv = (!p.is_empty()).then(|| tape.constant(Tensor::row(p.to_vec())));
        Ok(match (pv, latent) {
            (None, None) => None,
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (Some(a), Some(b)) => Some(tape.concat_cols(&[a, b])?),
        })
    }
}
