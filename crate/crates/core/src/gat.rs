//! GATv2 building blocks shared by the decoder and the actor.
//!
//! For target node `i` and source node `j` one head computes
//!
//! ```text
//! s_ij  = aᵀ LeakyReLU(W_dst h_i + W_src h_j + b)
//! α_ij  = softmax_j(s_ij)            (over the incoming edges of i)
//! h'_i  = Σ_j α_ij W_src h_j
//! ```
//!
//! Head outputs are concatenated, layer-normalized and passed through ReLU.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS, LEAKY_RELU_SLOPE};
use crate::error::Result;
use crate::graph::{complete_edges, SyndromeGraph};

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn new(tape: &mut Tape, store: &ParamStore) -> Self {
        Bound(store.iter().map(|(id, _)| tape.param(store, id)).collect())
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

/// Edge list split into target and source index arrays.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub n_nodes: usize,
    pub targets: Vec<usize>,
    pub sources: Vec<usize>,
}

impl EdgeIndex {
    pub fn complete(n: usize) -> Self {
        let (targets, sources) = complete_edges(n).into_iter().unzip();
        EdgeIndex { n_nodes: n, targets, sources }
    }
}

pub fn graph_input(tape: &mut Tape, g: &SyndromeGraph) -> Result<Var> {
    Ok(tape.input(Tensor::matrix(g.n_nodes(), g.rounds(), g.features().to_vec())?))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn init<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            weight: store.insert_uniform(&format!("{name}.weight"), vec![fan_in, fan_out], fan_in, rng)?,
            bias: store.insert_uniform(&format!("{name}.bias"), vec![1, fan_out], fan_in, rng)?,
        })
    }

    pub fn lookup(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Linear { weight: store.id(&format!("{name}.weight"))?, bias: store.id(&format!("{name}.bias"))? })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p.var(self.weight))?;
        tape.add(xw, p.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct GatHead {
    pub w_dst: ParamId,
    pub w_src: ParamId,
    pub bias: ParamId,
    pub att: ParamId,
}

#[derive(Clone, Debug)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub norm_scale: ParamId,
    pub norm_shift: ParamId,
}

impl GatLayer {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut hs = Vec::with_capacity(heads);
        for h in 0..heads {
            let p = format!("{name}.head{h}");
            hs.push(GatHead {
                w_dst: store.insert_uniform(&format!("{p}.w_dst"), vec![in_dim, hidden], in_dim, rng)?,
                w_src: store.insert_uniform(&format!("{p}.w_src"), vec![in_dim, hidden], in_dim, rng)?,
                bias: store.insert_uniform(&format!("{p}.bias"), vec![1, hidden], in_dim, rng)?,
                att: store.insert_uniform(&format!("{p}.att"), vec![hidden, 1], hidden, rng)?,
            });
        }
        Ok(GatLayer {
            heads: hs,
            norm_scale: store.insert_filled(&format!("{name}.norm.scale"), vec![1, hidden * heads], 1.0)?,
            norm_shift: store.insert_filled(&format!("{name}.norm.shift"), vec![1, hidden * heads], 0.0)?,
        })
    }

    pub fn lookup(store: &ParamStore, name: &str, heads: usize) -> Option<Self> {
        let hs = (0..heads)
            .map(|h| {
                let p = format!("{name}.head{h}");
                Some(GatHead {
                    w_dst: store.id(&format!("{p}.w_dst"))?,
                    w_src: store.id(&format!("{p}.w_src"))?,
                    bias: store.id(&format!("{p}.bias"))?,
                    att: store.id(&format!("{p}.att"))?,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(GatLayer {
            heads: hs,
            norm_scale: store.id(&format!("{name}.norm.scale"))?,
            norm_shift: store.id(&format!("{name}.norm.shift"))?,
        })
    }

    /// Attention layer, layer-norm and ReLU. Also returns each head's
    /// attention coefficients as an `edges × 1` column.
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        edges: &EdgeIndex,
    ) -> Result<(Var, Vec<Var>)> {
        let mut outs = Vec::with_capacity(self.heads.len());
        let mut alphas = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let dst = tape.matmul(x, p.var(h.w_dst))?;
            let src = tape.matmul(x, p.var(h.w_src))?;
            let dst_e = tape.gather_rows(dst, &edges.targets)?;
            let src_e = tape.gather_rows(src, &edges.sources)?;
            let z = tape.add(dst_e, src_e)?;
            let z = tape.add(z, p.var(h.bias))?;
            let z = tape.leaky_relu(z, LEAKY_RELU_SLOPE)?;
            let score = tape.matmul(z, p.var(h.att))?;
            let alpha = tape.softmax_groups(score, &edges.targets)?;
            let msg = tape.mul(src_e, alpha)?;
            outs.push(tape.segment_sum(msg, &edges.targets, edges.n_nodes)?);
            alphas.push(alpha);
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        let normed = tape.layer_norm(joined, p.var(self.norm_scale), p.var(self.norm_shift), LAYER_NORM_EPS)?;
        Ok((tape.relu(normed)?, alphas))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, edges: &EdgeIndex) -> Result<Var> {
        Ok(self.forward_with_attention(tape, p, x, edges)?.0)
    }
}
