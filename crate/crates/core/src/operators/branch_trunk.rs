//! Branch-trunk family: DeepONet, Geom-DeepONet, S-DeepONet, S-NOT, DCON, GANO.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{group_sum_matrix, DataDims, ModelConfig, OpInput, Operator};
use crate::diffcore::{
    gru_forward, mlp_forward, siren_forward, Activation, Dense, GruCell, LayerSpec, Mlp, ParamId, ParamStore,
    SelfAttention, Tape, Tensor, Var,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Mlp,
    Siren,
}

/// `out_act(Sum_groups(b * t) + bias)`: `b` is `1 x c*h`, `t` is `N x c*h`.
fn combine(tape: &mut Tape, store: &ParamStore, b: Var, t: Var, channels: usize, bias: ParamId, out: Activation) -> Result<Var> {
    let (bw, tw) = (tape.value(b).cols(), tape.value(t).cols());
    if bw != tw {
        return Err(Error::shape(format!("branch latent {bw} does not match trunk latent {tw}")));
    }
    let prod = tape.mul_row(t, b)?;
    let s = tape.constant(group_sum_matrix(tw / channels, channels));
    let y = tape.matmul(prod, s)?;
    let bv = tape.param(store, bias);
    let y = tape.add_row(y, bv)?;
    Ok(tape.act(y, out))
}

fn zero_bias(store: &mut ParamStore, name: &str, c: usize) -> Result<ParamId> {
    store.add(name, Tensor::zeros(&[1, c]))
}

/// `u(x) = Sum(U_b(p) * U_t(x))`, with an MLP or SIREN branch.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONet {
    pub kind: BranchKind,
    pub branch: Mlp,
    pub trunk: Mlp,
    pub channels: usize,
    pub omega0: f64,
    pub head_b: ParamId,
    pub out_act: Activation,
}

impl DeepONet {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        dims: &DataDims,
        branch_dim: usize,
        kind: BranchKind,
        rng: &mut R,
    ) -> Result<Self> {
        if branch_dim == 0 {
            return Err(Error::config(format!(
                "`{}` needs a parameter vector or a geometry encoding for its branch",
                cfg.arch
            )));
        }
        let c = dims.channels;
        let latent = c * cfg.hidden();
        let bd = cfg.mlp_dims(branch_dim, latent);
        let branch = match kind {
            BranchKind::Mlp => Mlp::new(store, "branch", &bd, cfg.activation(), Activation::Identity, rng)?,
            BranchKind::Siren => Mlp::siren(store, "branch", &bd, cfg.omega0, rng)?,
        };
        let trunk = Mlp::new(store, "trunk", &cfg.mlp_dims(3, latent), cfg.activation(), cfg.activation(), rng)?;
        let head_b = zero_bias(store, "head.b", c)?;
        Ok(DeepONet {
            kind,
            branch,
            trunk,
            channels: c,
            omega0: cfg.omega0,
            head_b,
            out_act: cfg.out_activation,
        })
    }

    pub fn branch_forward(&self, tape: &mut Tape, store: &ParamStore, p: Var) -> Result<Var> {
        match self.kind {
            BranchKind::Mlp => mlp_forward(tape, p, &self.branch.layers, store),
            BranchKind::Siren => siren_forward(tape, p, &self.branch.layers, store, self.omega0),
        }
    }
}

impl Operator for DeepONet {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let p = x.branch.ok_or_else(|| Error::config("branch input is empty"))?;
        let b = self.branch_forward(tape, store, p)?;
        let t = mlp_forward(tape, x.feats, &self.trunk.layers, store)?;
        combine(tape, store, b, t, self.channels, self.head_b, self.out_act)
    }

    fn output_bias(&self) -> ParamId {
        self.head_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqBranchKind {
    Gru,
    Attention,
}

/// Width of the sinusoidal time encoding used by the attention branch.
pub const TIME_ENCODING: usize = 8;

/// Sinusoidal encoding of step `t`.
pub fn time_encoding(t: usize) -> [f64; TIME_ENCODING] {
    std::array::from_fn(|k| {
        let freq = 1.0 / 10000f64.powf((2 * (k / 2)) as f64 / TIME_ENCODING as f64);
        let a = t as f64 * freq;
        if k % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}

/// DeepONet whose branch reads the load sequence, through a GRU (S-DeepONet)
/// or self-attention over time tokens (S-NOT).
#[derive(Debug, Clone, PartialEq)]
pub struct SeqDeepONet {
    pub kind: SeqBranchKind,
    pub gru: Option<GruCell>,
    pub embed: Option<Dense>,
    pub attn: Option<SelfAttention>,
    pub post: Option<Mlp>,
    pub trunk: Mlp,
    pub channels: usize,
    pub steps: usize,
    pub head_b: ParamId,
    pub out_act: Activation,
}

impl SeqDeepONet {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        dims: &DataDims,
        kind: SeqBranchKind,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.load_dim == 0 {
            return Err(Error::config(format!(
                "`{}` encodes a load sequence, but the dataset has load_dim 0",
                cfg.arch
            )));
        }
        let c = dims.channels;
        let h = cfg.hidden();
        let latent = c * h;
        let token = 1 + dims.geo_dim;
        let (mut gru, mut embed, mut attn, mut post) = (None, None, None, None);
        match kind {
            SeqBranchKind::Gru => gru = Some(GruCell::new(store, "branch.gru", token, latent, rng)?),
            SeqBranchKind::Attention => {
                embed = Some(Dense::new(
                    store,
                    "branch.embed",
                    LayerSpec::affine(token + TIME_ENCODING, h, cfg.activation()),
                    rng,
                )?);
                attn = Some(SelfAttention::new(store, "branch.attn", h, cfg.heads, cfg.tau, true, rng)?);
                post = Some(Mlp::new(store, "branch.post", &[h, h, latent], cfg.activation(), Activation::Identity, rng)?);
            }
        }
        let trunk = Mlp::new(store, "trunk", &cfg.mlp_dims(3, latent), cfg.activation(), cfg.activation(), rng)?;
        let head_b = zero_bias(store, "head.b", c)?;
        Ok(SeqDeepONet {
            kind,
            gru,
            embed,
            attn,
            post,
            trunk,
            channels: c,
            steps: dims.load_dim,
            head_b,
            out_act: cfg.out_activation,
        })
    }

    /// Token rows `[load_t, params]` (plus the time encoding for attention).
    pub fn tokens(&self, loads: &[f64], params: &[f64]) -> Result<Tensor> {
        if loads.len() != self.steps {
            return Err(Error::shape(format!(
                "expected a {}-step load sequence, got {}",
                self.steps,
                loads.len()
            )));
        }
        let pe = self.kind == SeqBranchKind::Attention;
        let w = 1 + params.len() + if pe { TIME_ENCODING } else { 0 };
        let mut data = Vec::with_capacity(loads.len() * w);
        for (t, &l) in loads.iter().enumerate() {
            data.push(l);
            data.extend_from_slice(params);
            if pe {
                data.extend_from_slice(&time_encoding(t));
            }
        }
        Tensor::matrix(loads.len(), w, data)
    }

    pub fn branch_forward(&self, tape: &mut Tape, store: &ParamStore, loads: &[f64], params: &[f64]) -> Result<Var> {
        let seq = tape.constant(self.tokens(loads, params)?);
        match self.kind {
            SeqBranchKind::Gru => gru_forward(tape, seq, self.gru.as_ref().expect("gru branch"), store),
            SeqBranchKind::Attention => {
                let e = self.embed.as_ref().expect("embed").forward(tape, store, seq)?;
                let a = self.attn.as_ref().expect("attn").forward(tape, store, e)?;
                let z = tape.add(e, a)?;
                let pooled = tape.mean_rows(z);
                mlp_forward(tape, pooled, &self.post.as_ref().expect("post").layers, store)
            }
        }
    }
}

impl Operator for SeqDeepONet {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let b = self.branch_forward(tape, store, x.loads, x.params)?;
        let t = mlp_forward(tape, x.feats, &self.trunk.layers, store)?;
        combine(tape, store, b, t, self.channels, self.head_b, self.out_act)
    }

    fn output_bias(&self) -> ParamId {
        self.head_b
    }
}

/// Output map after the last operator layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcOnHead {
    /// Affine map from the latent to the field channels.
    #[default]
    Affine,
    /// Sum over the latent plus a bias (single channel only).
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Affine(Dense),
    Sum(ParamId),
}

impl Head {
    fn new<R: Rng>(store: &mut ParamStore, kind: DcOnHead, width: usize, c: usize, out: Activation, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            DcOnHead::Affine => Head::Affine(Dense::new(store, "head", LayerSpec::affine(width, c, out), rng)?),
            DcOnHead::Sum => {
                if c != 1 {
                    return Err(Error::config("the sum head produces a single channel"));
                }
                Head::Sum(zero_bias(store, "head.b", 1)?)
            }
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, out: Activation) -> Result<Var> {
        match self {
            Head::Affine(d) => d.forward(tape, store, h),
            Head::Sum(b) => {
                let s = tape.sum_cols(h);
                let bv = tape.param(store, *b);
                let y = tape.add_row(s, bv)?;
                Ok(tape.act(y, out))
            }
        }
    }

    fn bias(&self) -> ParamId {
        match self {
            Head::Affine(d) => d.b,
            Head::Sum(b) => *b,
        }
    }
}

/// `h_0 = z`, `h_k = U_k(b * h_{k-1})`, then the head.
fn compose(tape: &mut Tape, store: &ParamStore, b: Var, z: Var, ops: &[Dense]) -> Result<Var> {
    let mut h = z;
    for op in ops {
        let g = tape.mul_row(h, b)?;
        h = op.forward(tape, store, g)?;
    }
    Ok(h)
}

fn operator_layers<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, width: usize, rng: &mut R) -> Result<Vec<Dense>> {
    (0..cfg.layers)
        .map(|k| Dense::new(store, &format!("op.{k}"), LayerSpec::affine(width, width, cfg.activation()), rng))
        .collect()
}

/// Deep compositional operator network.
#[derive(Debug, Clone, PartialEq)]
pub struct Dcon {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub ops: Vec<Dense>,
    head: Head,
    pub out_act: Activation,
}

impl Dcon {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, branch_dim: usize, rng: &mut R) -> Result<Self> {
        if branch_dim == 0 {
            return Err(Error::config("`dcon` needs a parameter vector or a geometry encoding for its branch"));
        }
        if cfg.layers == 0 {
            return Err(Error::config("dcon needs at least one operator layer"));
        }
        let w = cfg.hidden();
        let branch = Mlp::new(store, "branch", &cfg.mlp_dims(branch_dim, w), cfg.activation(), Activation::Identity, rng)?;
        let trunk = Mlp::new(store, "trunk", &cfg.mlp_dims(3, w), cfg.activation(), cfg.activation(), rng)?;
        let ops = operator_layers(store, cfg, w, rng)?;
        let head = Head::new(store, cfg.dcon_head, w, dims.channels, cfg.out_activation, rng)?;
        Ok(Dcon {
            branch,
            trunk,
            ops,
            head,
            out_act: cfg.out_activation,
        })
    }
}

impl Operator for Dcon {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let p = x.branch.ok_or_else(|| Error::config("branch input is empty"))?;
        let b = mlp_forward(tape, p, &self.branch.layers, store)?;
        let t = mlp_forward(tape, x.feats, &self.trunk.layers, store)?;
        let h = compose(tape, store, b, t, &self.ops)?;
        self.head.forward(tape, store, h, self.out_act)
    }

    fn output_bias(&self) -> ParamId {
        self.head.bias()
    }
}

/// DCON with a mean-pooled point-cloud encoding concatenated to the trunk
/// features; the branch falls back to the encoding when no parameters exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Gano {
    pub encoder: Mlp,
    pub branch: Mlp,
    pub trunk: Mlp,
    pub ops: Vec<Dense>,
    head: Head,
    pub uses_params: bool,
    pub out_act: Activation,
}

impl Gano {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, branch_dim: usize, rng: &mut R) -> Result<Self> {
        let h = cfg.hidden();
        let w = 2 * h;
        let encoder = Mlp::new(store, "geo.enc", &cfg.mlp_dims(3, h), cfg.activation(), cfg.activation(), rng)?;
        let uses_params = branch_dim > 0;
        let bin = if uses_params { branch_dim } else { h };
        let branch = Mlp::new(store, "branch", &cfg.mlp_dims(bin, w), cfg.activation(), Activation::Identity, rng)?;
        let trunk = Mlp::new(store, "trunk", &cfg.mlp_dims(3, h), cfg.activation(), cfg.activation(), rng)?;
        let ops = operator_layers(store, cfg, w, rng)?;
        let head = Head::new(store, cfg.dcon_head, w, dims.channels, cfg.out_activation, rng)?;
        Ok(Gano {
            encoder,
            branch,
            trunk,
            ops,
            head,
            uses_params,
            out_act: cfg.out_activation,
        })
    }

    /// `E_g = mean_i U_g(x_i)` over the (canonically ordered) cloud.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, cloud: &[[f64; 3]]) -> Result<Var> {
        if cloud.is_empty() {
            return Err(Error::Input("gano: empty geometry cloud".into()));
        }
        let g = tape.constant(crate::geometry::coords_tensor(cloud));
        let e = mlp_forward(tape, g, &self.encoder.layers, store)?;
        Ok(tape.mean_rows(e))
    }
}

impl Operator for Gano {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let eg = self.encode(tape, store, x.geometry)?;
        let bin = if self.uses_params {
            x.branch.ok_or_else(|| Error::config("branch input is empty"))?
        } else {
            eg
        };
        let b = mlp_forward(tape, bin, &self.branch.layers, store)?;
        let t = mlp_forward(tape, x.feats, &self.trunk.layers, store)?;
        let n = tape.value(t).rows();
        let rep = tape.repeat_rows(eg, n)?;
        let z = tape.concat_cols(&[t, rep])?;
        let h = compose(tape, store, b, z, &self.ops)?;
        self.head.forward(tape, store, h, self.out_act)
    }

    fn probe(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Option<Var>> {
        self.encode(tape, store, x.geometry).map(Some)
    }

    fn output_bias(&self) -> ParamId {
        self.head.bias()
    }
}
