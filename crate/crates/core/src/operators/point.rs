//! Point family: PointNet, GNOT, Transolver.

use rand::Rng;

use super::{DataDims, ModelConfig, OpInput, Operator};
use crate::diffcore::{
    mlp_forward, Activation, Dense, LayerSpec, Mlp, ParamId, ParamStore, SelfAttention, Tape,
    Tensor, Var,
};
use crate::error::{Error, Result};

/// Shared per-point MLP, max-pooled global feature, head on `[local, global]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNet {
    pub local: Mlp,
    pub head: Mlp,
}

impl PointNet {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, in_dim: usize, rng: &mut R) -> Result<Self> {
        let h = cfg.hidden();
        let act = cfg.activation();
        let mut ld = vec![in_dim];
        ld.extend(std::iter::repeat_n(h, cfg.layers.max(1)));
        Ok(PointNet {
            local: Mlp::new(store, "local", &ld, act, act, rng)?,
            head: Mlp::new(store, "head", &[2 * h, h, dims.channels], act, cfg.out_activation, rng)?,
        })
    }

    /// Per-point embeddings and their max-pooled global feature.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, feats: Var) -> Result<(Var, Var)> {
        if tape.value(feats).rows() == 0 {
            return Err(Error::Input("pointnet: empty cloud".into()));
        }
        let local = mlp_forward(tape, feats, &self.local.layers, store)?;
        let global = tape.max_rows(local);
        Ok((local, global))
    }
}

impl Operator for PointNet {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let (local, global) = self.embed(tape, store, x.feats)?;
        let n = tape.value(local).rows();
        let rep = tape.repeat_rows(global, n)?;
        let z = tape.concat_cols(&[local, rep])?;
        mlp_forward(tape, z, &self.head.layers, store)
    }

    fn probe(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Option<Var>> {
        Ok(Some(self.embed(tape, store, x.feats)?.1))
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}

/// Embedding, stacked self-attention layers without residuals, head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gnot {
    pub embed: Dense,
    pub attn: Vec<SelfAttention>,
    pub head: Mlp,
}

impl Gnot {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, in_dim: usize, rng: &mut R) -> Result<Self> {
        let h = cfg.hidden();
        let act = cfg.activation();
        Ok(Gnot {
            embed: Dense::new(store, "embed", LayerSpec::affine(in_dim, h, act), rng)?,
            attn: (0..cfg.layers)
                .map(|l| SelfAttention::new(store, &format!("attn.{l}"), h, 1, cfg.tau, false, rng))
                .collect::<Result<_>>()?,
            head: Mlp::new(store, "head", &[h, h, dims.channels], act, cfg.out_activation, rng)?,
        })
    }
}

impl Operator for Gnot {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let mut v = self.embed.forward(tape, store, x.feats)?;
        for a in &self.attn {
            v = a.forward(tape, store, v)?;
        }
        mlp_forward(tape, v, &self.head.layers, store)
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}

/// Slice weights `w` (`N x M`) and slice tokens `s` (`M x d`).
pub struct SliceState {
    pub weights: Var,
    pub tokens: Var,
}

/// Physics-attention over learned slices: soft-assign points to M slices,
/// run attention and a feed-forward block over the slice tokens, scatter
/// back through the same weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Transolver {
    pub embed: Dense,
    pub slice: Dense,
    pub attn: Vec<SelfAttention>,
    pub ffn: Vec<Mlp>,
    pub head: Mlp,
    pub slices: usize,
}

impl Transolver {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, dims: &DataDims, in_dim: usize, rng: &mut R) -> Result<Self> {
        if cfg.slices == 0 {
            return Err(Error::config("transolver needs at least one slice"));
        }
        let h = cfg.hidden();
        let act = cfg.activation();
        let embed = Dense::new(store, "embed", LayerSpec::affine(in_dim, h, act), rng)?;
        let slice = Dense::new(store, "slice", LayerSpec::affine(h, cfg.slices, Activation::Identity), rng)?;
        let mut attn = Vec::new();
        let mut ffn = Vec::new();
        for l in 0..cfg.layers {
            attn.push(SelfAttention::new(store, &format!("attn.{l}"), h, 1, cfg.tau, false, rng)?);
            ffn.push(Mlp::new(store, &format!("ffn.{l}"), &[h, h, h], act, Activation::Identity, rng)?);
        }
        let head = Mlp::new(store, "head", &[h, h, dims.channels], act, cfg.out_activation, rng)?;
        Ok(Transolver {
            embed,
            slice,
            attn,
            ffn,
            head,
            slices: cfg.slices,
        })
    }

    /// `w = softmax(U_slice(v))`, `s = w^T v / colsum(w)`.
    pub fn slice_state(&self, tape: &mut Tape, store: &ParamStore, v: Var) -> Result<SliceState> {
        let logits = self.slice.forward(tape, store, v)?;
        let w = tape.softmax_rows(logits);
        let wt = tape.transpose(w);
        let num = tape.matmul(wt, v)?;
        let den = tape.sum_cols(wt);
        let d = tape.value(v).cols();
        let ones = tape.constant(Tensor::filled(&[1, d], 1.0));
        let den = tape.matmul(den, ones)?;
        let tokens = tape.div(num, den)?;
        Ok(SliceState { weights: w, tokens })
    }
}

impl Operator for Transolver {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Var> {
        let v = self.embed.forward(tape, store, x.feats)?;
        let SliceState { weights, mut tokens } = self.slice_state(tape, store, v)?;
        for (a, f) in self.attn.iter().zip(&self.ffn) {
            let y = a.forward(tape, store, tokens)?;
            tokens = tape.add(tokens, y)?;
            let y = mlp_forward(tape, tokens, &f.layers, store)?;
            tokens = tape.add(tokens, y)?;
        }
        let u = tape.matmul(weights, tokens)?;
        mlp_forward(tape, u, &self.head.layers, store)
    }

    fn probe(&self, tape: &mut Tape, store: &ParamStore, x: &OpInput) -> Result<Option<Var>> {
        let v = self.embed.forward(tape, store, x.feats)?;
        Ok(Some(self.slice_state(tape, store, v)?.tokens))
    }

    fn output_bias(&self) -> ParamId {
        self.head.layers.last().expect("head").b
    }
}
