use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::decoder::check_same_layout;
use crate::error::{Error, Result};
use crate::gat::{graph_input, Bound, EdgeIndex, GatLayer, Linear};
use crate::graph::{ActionIndex, SyndromeGraph};
use crate::seeding::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
}

impl ActorConfig {
    pub fn for_rounds(t: usize) -> Self {
        ActorConfig { in_dim: t, hidden_dim: 32, heads: 1 }
    }
}

/// GATv2 policy without pooling: each node's embedding is mapped to `t`
/// logits and one softmax runs over all `n_s · t` node-major actions.
#[derive(Clone, Debug)]
pub struct ActorModel {
    pub config: ActorConfig,
    pub params: ParamStore,
    gat1: GatLayer,
    gat2: GatLayer,
    head: Linear,
}

impl ActorModel {
    pub fn init(config: ActorConfig, seed: u64) -> Result<Self> {
        if config.in_dim == 0 || config.hidden_dim == 0 || config.heads == 0 {
            return Err(Error::Config("actor dimensions must be positive".into()));
        }
        let mut r = rng(seed);
        let mut params = ParamStore::new();
        let width = config.hidden_dim * config.heads;
        let gat1 = GatLayer::init(&mut params, "gat1", config.in_dim, config.hidden_dim, config.heads, &mut r)?;
        let gat2 = GatLayer::init(&mut params, "gat2", width, config.hidden_dim, config.heads, &mut r)?;
        let head = Linear::init(&mut params, "policy", width, config.in_dim, &mut r)?;
        Ok(ActorModel { config, params, gat1, gat2, head })
    }

    pub fn from_params(config: ActorConfig, params: ParamStore) -> Result<Self> {
        let reference = ActorModel::init(config.clone(), 0)?;
        check_same_layout(&reference.params, &params)?;
        let missing = || Error::Checkpoint("actor parameters incomplete".into());
        Ok(ActorModel {
            gat1: GatLayer::lookup(&params, "gat1", config.heads).ok_or_else(missing)?,
            gat2: GatLayer::lookup(&params, "gat2", config.heads).ok_or_else(missing)?,
            head: Linear::lookup(&params, "policy").ok_or_else(missing)?,
            config,
            params,
        })
    }

    /// Action probabilities as an `(n_s · t) × 1` column.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &SyndromeGraph) -> Result<Var> {
        if g.rounds() != self.config.in_dim {
            return Err(Error::Dimension(format!(
                "graph has {}-dimensional features, actor expects {}",
                g.rounds(),
                self.config.in_dim
            )));
        }
        let edges = EdgeIndex::complete(g.n_nodes());
        let x = graph_input(tape, g)?;
        let h = self.gat1.forward(tape, p, x, &edges)?;
        let h = self.gat2.forward(tape, p, h, &edges)?;
        let logits = self.head.forward(tape, p, h)?;
        let flat = tape.reshape(logits, vec![g.n_actions(), 1])?;
        tape.softmax(flat)
    }

    /// `log π(a | g)` as a `1 × 1` value on `tape`.
    pub fn log_prob(&self, tape: &mut Tape, p: &Bound, g: &SyndromeGraph, a: ActionIndex) -> Result<Var> {
        let probs = self.forward(tape, p, g)?;
        let picked = tape.gather_rows(probs, &[a.0])?;
        tape.log(picked)
    }

    pub fn policy(&self, g: &SyndromeGraph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &self.params);
        let probs = self.forward(&mut tape, &p, g)?;
        Ok(tape.value(probs).values().to_vec())
    }
}
