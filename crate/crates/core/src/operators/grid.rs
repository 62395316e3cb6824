//! Grid family: the Fourier layer, GINO, and a factorized-plane U-Net
//! (FigConv reconstruction).

use rand::Rng;

use super::{DataDims, ModelConfig, OpInput, Operator};
use crate::diffcore::{
    mlp_forward, retained_modes, spectral_forward, uniform, Activation, Conv3, Dense, LayerSpec, Mlp, Padding, ParamId,
    ParamStore, SpectralGeom, Tape, Var,
};
use crate::error::{Error, Result};
use crate::geometry::{coords_tensor, radius_neighbors, transfer_with_graph, PairMaps, RegularGrid};

/// Spectral convolution on a fixed lattice with an optional pointwise bypass.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLayer {
    pub geom: SpectralGeom,
    pub w_re: ParamId,
    pub w_im: ParamId,
    pub bypass: Option<Dense>,
}

impl FourierLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: [usize; 3],
        modes: [usize; 3],
        cin: usize,
        cout: usize,
        bypass: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let kept = retained_modes(dims, modes)?;
        let bound = 1.0 / ((cin * cout) as f64).sqrt();
        let w_re = store.add(format!("{name}.r_re"), uniform(rng, &[kept.len(), cout * cin], bound))?;
        let w_im = store.add(format!("{name}.r_im"), uniform(rng, &[kept.len(), cout * cin], bound))?;
        let bypass = if bypass {
            Some(Dense::new(store, &format!("{name}.w"), LayerSpec::affine(cin, cout, Activation::Identity), rng)?)
        } else {
            None
        };
        Ok(FourierLayer {
            geom: SpectralGeom {
                dims,
                cin,
                cout,
                modes: kept,
            },
            w_re,
            w_im,
            bypass,
        })
    }
}

/// `act(IDFT(R * DFT(x)) + W x + b)`; without a bypass, just the spectral path.
pub fn fourier_layer(tape: &mut Tape, store: &ParamStore, x: Var, layer: &FourierLayer, act: Activation) -> Result<Var> {
    let wr = tape.param(store, layer.w_re);
    let wi = tape.param(store, layer.w_im);
    let y = spectral_forward(tape, x, wr, wi, layer.geom.clone())?;
    match &layer.bypass {
        Some(d) => {
            let b = d.forward(tape, store, x)?;
            let s = tape.add(y, b)?;
            Ok(tape.act(s, act))
        }
        None => Ok(y),
    }
}

fn pair_maps<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    src: usize,
    dst: usize,
    out: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<PairMaps> {
    let h = cfg.hidden();
    let mp_out = if cfg.mp_channels { out } else { 1 };
    Ok(PairMaps {
        mp: Mlp::new(store, &format!("{name}.mp"), &[src + dst, h, mp_out], cfg.activation(), Activation::Identity, rng)?,
        f: Mlp::new(store, &format!("{name}.f"), &[src, out], Activation::Identity, Activation::Identity, rng)?,
    })
}

fn model_grid(cfg: &ModelConfig, dims: &DataDims) -> Result<RegularGrid> {
    match &cfg.grid {
        Some(g) => RegularGrid::new(g.dims, g.lo, g.hi),
        None => RegularGrid::new(dims.grid, dims.lo, dims.hi),
    }
}

fn radius_for(cfg: &ModelConfig, grid: &RegularGrid) -> Result<f64> {
    let r = cfg.radius.unwrap_or(2.0 * grid.median_spacing());
    if !(r > 0.0) {
        return Err(Error::config(format!("transfer radius must be positive, got {r}")));
    }
    Ok(r)
}

/// Encode points onto a lattice, run Fourier layers, decode at the points.
#[derive(Debug, Clone, PartialEq)]
pub struct Gino {
    pub grid: RegularGrid,
    pub radius: f64,
    pub encode: PairMaps,
    pub layers: Vec<FourierLayer>,
    pub decode: PairMaps,
    pub head: Mlp,
    pub act: Activation,
    pub pure: bool,
}

impl Gino {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, in_dim: usize, rng: &mut R) -> Result<Self> {
        let grid = model_grid(cfg, dims)?;
        let radius = radius_for(cfg, &grid)?;
        let h = cfg.hidden();
        let encode = pair_maps(store, "enc", in_dim, 3, h, cfg, rng)?;
        let layers = (0..cfg.layers)
            .map(|l| FourierLayer::new(store, &format!("fl.{l}"), grid.dims, cfg.modes, h, h, !cfg.spectral_only, rng))
            .collect::<Result<_>>()?;
        let decode = pair_maps(store, "dec", h, in_dim, h, cfg, rng)?;
        let head = Mlp::new(store, "head", &[h, h, dims.channels], cfg.activation(), cfg.out_activation, rng)?;
        Ok(Gino {
            grid,
            radius,
            encode,
            layers,
            decode,
            head,
            act: cfg.activation(),
            pure: cfg.spectral_only,
        })
    }
}

impl Operator for Gino {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let nodes = self.grid.coords();
        let gfeat = tape.constant(coords_tensor(&nodes));
        let to_grid = radius_neighbors(x.coords, &nodes, self.radius)?;
        let mut g = transfer_with_graph(tape, store, &to_grid, x.feats, gfeat, &self.encode)?;
        for l in &self.layers {
            g = fourier_layer(tape, store, g, l, self.act)?;
        }
        let to_pts = radius_neighbors(&nodes, x.coords, self.radius)?;
        let v = transfer_with_graph(tape, store, &to_pts, g, x.feats, &self.decode)?;
        mlp_forward(tape, v, &self.head.layers, store)
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}

/// Convolutional U-Net on a lattice whose flat axes (extent 1) are left
/// alone: kernel 3 and stride 2 on the others.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet2 {
    pub down: Vec<Conv3>,
    pub up: Vec<Conv3>,
    pub stride: [usize; 3],
    pub act: Activation,
}

impl UNet2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: [usize; 3],
        width: usize,
        depth: usize,
        act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let active: [bool; 3] = dims.map(|d| d > 1);
        for a in 0..3 {
            if active[a] && dims[a] < 1 << depth {
                return Err(Error::config(format!(
                    "grid {dims:?} is too small for a depth-{depth} U-Net (needs {} per axis)",
                    1 << depth
                )));
            }
        }
        let kernel = active.map(|on| if on { 3 } else { 1 });
        let stride = active.map(|on| if on { 2 } else { 1 });
        let mut down = Vec::with_capacity(depth + 1);
        down.push(Conv3::new(store, &format!("{name}.d0"), width, width, kernel, [1; 3], Padding::Same, rng)?);
        for l in 1..=depth {
            down.push(Conv3::new(store, &format!("{name}.d{l}"), width, width, kernel, stride, Padding::Same, rng)?);
        }
        let up = (0..depth)
            .map(|l| Conv3::new(store, &format!("{name}.u{l}"), 2 * width, width, kernel, [1; 3], Padding::Same, rng))
            .collect::<Result<_>>()?;
        Ok(UNet2 { down, up, stride, act })
    }

    pub fn depth(&self) -> usize {
        self.up.len()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, dims: [usize; 3]) -> Result<Var> {
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = x;
        let mut d = dims;
        for c in &self.down {
            let (y, nd) = c.forward(tape, store, h, d)?;
            h = tape.act(y, self.act);
            d = nd;
            skips.push((h, d));
        }
        for l in (0..self.depth()).rev() {
            let (skip, fine) = skips[l];
            let coarse = skips[l + 1].1;
            let idx = upsample_index(fine, coarse, self.stride);
            let u = tape.gather_rows(h, idx)?;
            let cat = tape.concat_cols(&[u, skip])?;
            let (y, _) = self.up[l].forward(tape, store, cat, fine)?;
            h = tape.act(y, self.act);
        }
        Ok(h)
    }
}

/// Nearest-neighbour upsampling map: fine node -> coarse node.
pub fn upsample_index(fine: [usize; 3], coarse: [usize; 3], stride: [usize; 3]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(fine.iter().product());
    for i in 0..fine[0] {
        for j in 0..fine[1] {
            for k in 0..fine[2] {
                let (ci, cj, ck) = (i / stride[0], j / stride[1], k / stride[2]);
                idx.push((ci * coarse[1] + cj) * coarse[2] + ck);
            }
        }
    }
    idx
}

/// One axis-aligned plane of the factorized grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    /// The axis collapsed to extent 1.
    pub dropped: usize,
    pub dims: [usize; 3],
    pub nodes: Vec<[f64; 3]>,
}

impl Plane {
    pub fn new(grid: &RegularGrid, dropped: usize) -> Self {
        let mut dims = grid.dims;
        dims[dropped] = 1;
        let h = grid.spacing();
        let mut nodes = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let mut p = [
                        grid.lo[0] + i as f64 * h[0],
                        grid.lo[1] + j as f64 * h[1],
                        grid.lo[2] + k as f64 * h[2],
                    ];
                    p[dropped] = 0.0;
                    nodes.push(p);
                }
            }
        }
        Plane { dropped, dims, nodes }
    }

    pub fn project(&self, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
        pts.iter()
            .map(|p| {
                let mut q = *p;
                q[self.dropped] = 0.0;
                q
            })
            .collect()
    }

    pub fn label(&self) -> &'static str {
        ["yz", "xz", "xy"][self.dropped]
    }
}

/// Factorized implicit grid network: three planes (xy, yz, xz), a U-Net on
/// each, decoded features summed across planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FigConv {
    pub planes: Vec<Plane>,
    pub radius: f64,
    pub encode: Vec<PairMaps>,
    pub unets: Vec<UNet2>,
    pub decode: Vec<PairMaps>,
    pub head: Mlp,
}

impl FigConv {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, in_dim: usize, rng: &mut R) -> Result<Self> {
        let grid = model_grid(cfg, dims)?;
        let radius = radius_for(cfg, &grid)?;
        let h = cfg.hidden();
        let planes: Vec<Plane> = [2, 0, 1].iter().map(|&a| Plane::new(&grid, a)).collect();
        let (mut encode, mut unets, mut decode) = (Vec::new(), Vec::new(), Vec::new());
        for p in &planes {
            let l = p.label();
            encode.push(pair_maps(store, &format!("enc.{l}"), in_dim, 3, h, cfg, rng)?);
            unets.push(UNet2::new(store, &format!("unet.{l}"), p.dims, h, cfg.unet_depth, cfg.activation(), rng)?);
            decode.push(pair_maps(store, &format!("dec.{l}"), h, in_dim, h, cfg, rng)?);
        }
        let head = Mlp::new(store, "head", &[h, h, dims.channels], cfg.activation(), cfg.out_activation, rng)?;
        Ok(FigConv {
            planes,
            radius,
            encode,
            unets,
            decode,
            head,
        })
    }
}

impl Operator for FigConv {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (k, p) in self.planes.iter().enumerate() {
            let proj = p.project(x.coords);
            let nf = tape.constant(coords_tensor(&p.nodes));
            let to_plane = radius_neighbors(&proj, &p.nodes, self.radius)?;
            let g = transfer_with_graph(tape, store, &to_plane, x.feats, nf, &self.encode[k])?;
            let g = self.unets[k].forward(tape, store, g, p.dims)?;
            let to_pts = radius_neighbors(&p.nodes, &proj, self.radius)?;
            let v = transfer_with_graph(tape, store, &to_pts, g, x.feats, &self.decode[k])?;
            acc = Some(match acc {
                None => v,
                Some(a) => tape.add(a, v)?,
            });
        }
        let v = acc.expect("three planes");
        mlp_forward(tape, v, &self.head.layers, store)
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}
