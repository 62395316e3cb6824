//! Learnable building blocks recorded on a [`Tape`]: affine and sinusoidal
//! stacks, a GRU cell, and scaled dot-product attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::params::{init_affine_bias, init_affine_weight, init_siren_weight, ParamId, ParamStore};
use super::tape::{softmax_rows_value, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Affine,
    Sinusoidal,
    RecurrentCell,
    Attention,
    Conv3,
    Spectral,
}

/// Shape and nonlinearity of one learnable map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Frequency scale for sinusoidal layers.
    #[serde(default)]
    pub omega0: Option<f64>,
    /// Softmax temperature for attention layers.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Kernel extents for convolutions.
    #[serde(default)]
    pub kernel: Option<[usize; 3]>,
}

impl LayerSpec {
    pub fn affine(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Affine,
            in_dim,
            out_dim,
            activation,
            omega0: None,
            tau: None,
            kernel: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::config(format!(
                "layer dims must be positive, got {} -> {}",
                self.in_dim, self.out_dim
            )));
        }
        if let Some(k) = self.kernel {
            if k.iter().any(|&e| e == 0 || e % 2 == 0) {
                return Err(Error::config(format!("kernel extents must be odd, got {k:?}")));
            }
        }
        Ok(())
    }
}

/// A layer spec bound to its weight (`in × out`) and bias (`1 × out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub spec: LayerSpec,
    pub name: String,
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let w = store.add(format!("{name}.w"), init_affine_weight(rng, spec.in_dim, spec.out_dim))?;
        let b = store.add(format!("{name}.b"), init_affine_bias(rng, spec.in_dim, spec.out_dim))?;
        Ok(Dense {
            spec,
            name: name.to_string(),
            w,
            b,
        })
    }

    /// Affine map followed by this layer's activation.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let z = self.pre_activation(tape, store, x)?;
        Ok(tape.act(z, self.spec.activation))
    }

    pub fn pre_activation(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.spec.in_dim {
            return Err(Error::shape(format!(
                "layer `{}` expects {} input features, got {cols}",
                self.name, self.spec.in_dim
            )));
        }
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }

    pub fn param_count(&self) -> usize {
        self.spec.in_dim * self.spec.out_dim + self.spec.out_dim
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims[n]` with `hidden` between
    /// layers and `out` on the last one.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        out: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config(format!("mlp `{name}` needs at least two dims")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { out } else { hidden };
                Dense::new(
                    store,
                    &format!("{name}.{i}"),
                    LayerSpec::affine(dims[i], dims[i + 1], act),
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    /// SIREN stack: sinusoidal hidden layers with frequency `omega0`, identity output.
    pub fn siren<R: Rng>(store: &mut ParamStore, name: &str, dims: &[usize], omega0: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config(format!("siren `{name}` needs at least two dims")));
        }
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let last = i + 1 == n;
            let spec = LayerSpec {
                kind: if last { LayerKind::Affine } else { LayerKind::Sinusoidal },
                in_dim: dims[i],
                out_dim: dims[i + 1],
                activation: if last { Activation::Identity } else { Activation::Sin },
                omega0: (!last).then_some(omega0),
                tau: None,
                kernel: None,
            };
            spec.validate()?;
            let lname = format!("{name}.{i}");
            let w = store.add(
                format!("{lname}.w"),
                init_siren_weight(rng, dims[i], dims[i + 1], i == 0, omega0),
            )?;
            let b = store.add(format!("{lname}.b"), init_affine_bias(rng, dims[i], dims[i + 1]))?;
            layers.push(Dense {
                spec,
                name: lname,
                w,
                b,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.spec.out_dim).unwrap_or(0)
    }
}

fn check_chain(x_cols: usize, layers: &[Dense]) -> Result<()> {
    let Some(first) = layers.first() else {
        return Err(Error::config("empty layer list"));
    };
    if x_cols != first.spec.in_dim {
        return Err(Error::shape(format!(
            "layer `{}` expects {} input features, got {x_cols}",
            first.name, first.spec.in_dim
        )));
    }
    for pair in layers.windows(2) {
        if pair[0].spec.out_dim != pair[1].spec.in_dim {
            return Err(Error::shape(format!(
                "layer `{}` outputs {} features but `{}` expects {}",
                pair[0].name, pair[0].spec.out_dim, pair[1].name, pair[1].spec.in_dim
            )));
        }
    }
    Ok(())
}

/// Runs `x` (rows = samples) through a dense stack.
pub fn mlp_forward(tape: &mut Tape, x: Var, layers: &[Dense], params: &ParamStore) -> Result<Var> {
    check_chain(tape.value(x).cols(), layers)?;
    let mut h = x;
    for l in layers {
        h = match l.spec.kind {
            LayerKind::Sinusoidal => {
                let z = l.pre_activation(tape, params, h)?;
                let s = tape.scale(z, l.spec.omega0.unwrap_or(1.0));
                tape.act(s, Activation::Sin)
            }
            _ => l.forward(tape, params, h)?,
        };
    }
    Ok(h)
}

/// SIREN forward: every hidden layer computes `sin(omega0 * (x W + b))`.
pub fn siren_forward(tape: &mut Tape, x: Var, layers: &[Dense], params: &ParamStore, omega0: f64) -> Result<Var> {
    check_chain(tape.value(x).cols(), layers)?;
    let n = layers.len();
    for (i, l) in layers.iter().enumerate() {
        let last = i + 1 == n;
        let ok = if last {
            l.spec.activation == Activation::Identity
        } else {
            l.spec.activation == Activation::Sin
        };
        if !ok {
            return Err(Error::config(format!(
                "siren layer `{}` has activation {:?}; hidden layers must be sin and the last identity",
                l.name, l.spec.activation
            )));
        }
    }
    let mut h = x;
    for (i, l) in layers.iter().enumerate() {
        let z = l.pre_activation(tape, params, h)?;
        h = if i + 1 == n {
            z
        } else {
            let s = tape.scale(z, omega0);
            tape.act(s, Activation::Sin)
        };
    }
    Ok(h)
}

/// Gated recurrent unit with gate order (reset, update, candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub in_dim: usize,
    pub hidden: usize,
    /// `in × 3h`
    pub w_in: ParamId,
    /// `h × 3h`
    pub w_hid: ParamId,
    pub b_in: ParamId,
    pub b_hid: ParamId,
}

impl GruCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::config("gru dims must be positive"));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let u = |rng: &mut R, shape: &[usize]| super::params::uniform(rng, shape, bound);
        Ok(GruCell {
            in_dim,
            hidden,
            w_in: store.add(format!("{name}.w_in"), u(rng, &[in_dim, 3 * hidden]))?,
            w_hid: store.add(format!("{name}.w_hid"), u(rng, &[hidden, 3 * hidden]))?,
            b_in: store.add(format!("{name}.b_in"), u(rng, &[1, 3 * hidden]))?,
            b_hid: store.add(format!("{name}.b_hid"), u(rng, &[1, 3 * hidden]))?,
        })
    }
}

/// Final hidden state after running the cell over the rows of `seq` from h = 0.
pub fn gru_forward(tape: &mut Tape, seq: Var, cell: &GruCell, params: &ParamStore) -> Result<Var> {
    let (t_len, d_in) = (tape.value(seq).rows(), tape.value(seq).cols());
    if tape.value(seq).is_empty() || t_len == 0 {
        return Err(Error::Input("gru: empty sequence".into()));
    }
    if d_in != cell.in_dim {
        return Err(Error::shape(format!(
            "gru expects {} input features, got {d_in}",
            cell.in_dim
        )));
    }
    let hd = cell.hidden;
    let w_in = tape.param(params, cell.w_in);
    let w_hid = tape.param(params, cell.w_hid);
    let b_in = tape.param(params, cell.b_in);
    let b_hid = tape.param(params, cell.b_hid);
    let xi = tape.matmul(seq, w_in)?;
    let xi = tape.add_row(xi, b_in)?;
    let mut h = tape.constant(Tensor::zeros(&[1, hd]));
    for t in 0..t_len {
        let gi = tape.gather_rows(xi, vec![t])?;
        let gh = tape.matmul(h, w_hid)?;
        let gh = tape.add_row(gh, b_hid)?;
        let (i_r, i_z, i_n) = (tape.slice_cols(gi, 0, hd)?, tape.slice_cols(gi, hd, hd)?, tape.slice_cols(gi, 2 * hd, hd)?);
        let (h_r, h_z, h_n) = (tape.slice_cols(gh, 0, hd)?, tape.slice_cols(gh, hd, hd)?, tape.slice_cols(gh, 2 * hd, hd)?);
        let r = tape.add(i_r, h_r)?;
        let r = tape.act(r, Activation::Sigmoid);
        let z = tape.add(i_z, h_z)?;
        let z = tape.act(z, Activation::Sigmoid);
        let rn = tape.mul(r, h_n)?;
        let n = tape.add(i_n, rn)?;
        let n = tape.act(n, Activation::Tanh);
        // h' = n + z * (h - n)
        let d = tape.sub(h, n)?;
        let zd = tape.mul(z, d)?;
        h = tape.add(n, zd)?;
    }
    Ok(h)
}

/// `softmax(q k^T / tau) v`, row per query.
pub fn attention_forward(tape: &mut Tape, q: Var, k: Var, v: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("attention temperature must be positive, got {tau}")));
    }
    let (dq, dk) = (tape.value(q).cols(), tape.value(k).cols());
    if dq != dk || tape.value(k).rows() != tape.value(v).rows() {
        return Err(Error::shape(format!(
            "attention: q {:?}, k {:?}, v {:?}",
            tape.value(q).shape(),
            tape.value(k).shape(),
            tape.value(v).shape()
        )));
    }
    let kt = tape.transpose(k);
    let s = tape.matmul(q, kt)?;
    let s = tape.scale(s, 1.0 / tau);
    let a = tape.softmax_rows(s);
    tape.matmul(a, v)
}

/// Multi-head self-attention with per-head temperature `sqrt(d_head)` unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    pub heads: usize,
    pub tau: Option<f64>,
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub out: Option<Dense>,
}

impl SelfAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        tau: Option<f64>,
        out_proj: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!("{heads} heads do not divide width {dim}")));
        }
        let lin = |store: &mut ParamStore, n: &str, rng: &mut R| {
            Dense::new(store, &format!("{name}.{n}"), LayerSpec::affine(dim, dim, Activation::Identity), rng)
        };
        Ok(SelfAttention {
            heads,
            tau,
            q: lin(store, "q", rng)?,
            k: lin(store, "k", rng)?,
            v: lin(store, "v", rng)?,
            out: if out_proj { Some(lin(store, "o", rng)?) } else { None },
        })
    }

    pub fn head_tau(&self) -> f64 {
        let dh = self.q.spec.out_dim / self.heads;
        self.tau.unwrap_or((dh as f64).sqrt())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let q = self.q.forward(tape, store, x)?;
        let k = self.k.forward(tape, store, x)?;
        let v = self.v.forward(tape, store, x)?;
        let tau = self.head_tau();
        let y = if self.heads == 1 {
            attention_forward(tape, q, k, v, tau)?
        } else {
            let dh = self.q.spec.out_dim / self.heads;
            let mut outs = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = tape.slice_cols(q, h * dh, dh)?;
                let kh = tape.slice_cols(k, h * dh, dh)?;
                let vh = tape.slice_cols(v, h * dh, dh)?;
                outs.push(attention_forward(tape, qh, kh, vh, tau)?);
            }
            tape.concat_cols(&outs)?
        };
        match &self.out {
            Some(o) => o.forward(tape, store, y),
            None => Ok(y),
        }
    }
}

/// Numerically stabilised softmax of a 2-D tensor along `axis` (0 or 1).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    match axis {
        1 => Ok(softmax_rows_value(x)),
        0 => {
            let t = super::tape::transpose_value(x);
            Ok(super::tape::transpose_value(&softmax_rows_value(&t)))
        }
        _ => Err(Error::config(format!("softmax axis {axis} out of range for a matrix"))),
    }
}
