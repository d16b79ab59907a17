//! GATv2 graph classifier for the logical-flip label.
//!
//! Two attention layers (each followed by layer-norm and ReLU), mean pooling
//! over nodes and a two-layer MLP give one logit per syndrome graph. The
//! logical-error probability is `P_L = σ(logit)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{logistic, weighted_bce_value, Adam, ParamStore, Tape, Var};
use crate::codesim::{Dataset, Split};
use crate::error::{Error, Result};
use crate::gat::{graph_input, Bound, EdgeIndex, GatLayer, Linear};
use crate::graph::{to_graph, SyndromeGraph};
use crate::report::CurveRow;
use crate::seeding::{rng, stage_seed};

/// Anything that maps a syndrome graph to a logical-error logit.
pub trait Classifier: Sync {
    fn logit(&self, g: &SyndromeGraph) -> Result<f64>;

    /// `P_L = σ(logit)`.
    fn prob(&self, g: &SyndromeGraph) -> Result<f64> {
        Ok(logistic(self.logit(g)?))
    }

    /// Positive iff `P_L > 0.5`; a tie is negative.
    fn predicts_positive(&self, g: &SyndromeGraph) -> Result<bool> {
        Ok(self.prob(g)? > 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl DecoderConfig {
    pub fn for_rounds(t: usize) -> Self {
        DecoderConfig { in_dim: t, hidden_dim: 32, heads: 1, mlp_hidden: 32, lr: 1e-3, epochs: 20, batch: 64 }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("in_dim", self.in_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("mlp_hidden", self.mlp_hidden),
            ("epochs", self.epochs),
            ("batch", self.batch),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DecoderModel {
    pub config: DecoderConfig,
    pub params: ParamStore,
    gat1: GatLayer,
    gat2: GatLayer,
    mlp1: Linear,
    mlp2: Linear,
}

impl DecoderModel {
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng(seed);
        let mut params = ParamStore::new();
        let width = config.hidden_dim * config.heads;
        let gat1 = GatLayer::init(&mut params, "gat1", config.in_dim, config.hidden_dim, config.heads, &mut r)?;
        let gat2 = GatLayer::init(&mut params, "gat2", width, config.hidden_dim, config.heads, &mut r)?;
        let mlp1 = Linear::init(&mut params, "mlp1", width, config.mlp_hidden, &mut r)?;
        let mlp2 = Linear::init(&mut params, "mlp2", config.mlp_hidden, 1, &mut r)?;
        Ok(DecoderModel { config, params, gat1, gat2, mlp1, mlp2 })
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(config: DecoderConfig, params: ParamStore) -> Result<Self> {
        let reference = DecoderModel::init(config.clone(), 0)?;
        check_same_layout(&reference.params, &params)?;
        let missing = || Error::Checkpoint("decoder parameters incomplete".into());
        Ok(DecoderModel {
            gat1: GatLayer::lookup(&params, "gat1", config.heads).ok_or_else(missing)?,
            gat2: GatLayer::lookup(&params, "gat2", config.heads).ok_or_else(missing)?,
            mlp1: Linear::lookup(&params, "mlp1").ok_or_else(missing)?,
            mlp2: Linear::lookup(&params, "mlp2").ok_or_else(missing)?,
            config,
            params,
        })
    }

    fn check_input(&self, g: &SyndromeGraph) -> Result<()> {
        if g.rounds() != self.config.in_dim {
            return Err(Error::Dimension(format!(
                "graph has {}-dimensional features, decoder expects {}",
                g.rounds(),
                self.config.in_dim
            )));
        }
        Ok(())
    }

    /// Records the forward pass for `g`; returns the `1 × 1` logit.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &SyndromeGraph) -> Result<Var> {
        self.check_input(g)?;
        let edges = EdgeIndex::complete(g.n_nodes());
        let x = graph_input(tape, g)?;
        let h = self.gat1.forward(tape, p, x, &edges)?;
        let h = self.gat2.forward(tape, p, h, &edges)?;
        let pooled = tape.mean_rows(h)?;
        let z = self.mlp1.forward(tape, p, pooled)?;
        let z = tape.relu(z)?;
        self.mlp2.forward(tape, p, z)
    }

    /// First-layer attention coefficients of head 0, one per `(target, source)` edge.
    pub fn first_layer_attention(&self, g: &SyndromeGraph) -> Result<Vec<f64>> {
        self.check_input(g)?;
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &self.params);
        let x = graph_input(&mut tape, g)?;
        let (_, alphas) = self.gat1.forward_with_attention(&mut tape, &p, x, &EdgeIndex::complete(g.n_nodes()))?;
        Ok(tape.value(alphas[0]).values().to_vec())
    }
}

impl Classifier for DecoderModel {
    fn logit(&self, g: &SyndromeGraph) -> Result<f64> {
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &self.params);
        let out = self.forward(&mut tape, &p, g)?;
        tape.value(out).item()
    }
}

pub(crate) fn check_same_layout(reference: &ParamStore, got: &ParamStore) -> Result<()> {
    if reference.len() != got.len() {
        return Err(Error::Checkpoint(format!("expected {} parameters, got {}", reference.len(), got.len())));
    }
    for ((_, a), (_, b)) in reference.iter().zip(got.iter()) {
        if a.name != b.name || a.value.shape() != b.value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {} {:?} does not match expected {} {:?}",
                b.name,
                b.value.shape(),
                a.name,
                a.value.shape()
            )));
        }
    }
    Ok(())
}

/// Class-weighted binary cross-entropy of one logit.
pub fn weighted_bce(logit: f64, y: u8, pos_weight: f64) -> f64 {
    weighted_bce_value(logit, f64::from(y), pos_weight)
}

/// `N_neg / N_pos` over the given records.
pub fn pos_weight(ds: &Dataset, indices: &[usize]) -> Result<f64> {
    let (neg, pos) = ds.class_counts(indices);
    if pos == 0 || neg == 0 {
        return Err(Error::Contract(format!(
            "training split has a single class ({neg} negative, {pos} positive); pos_weight undefined"
        )));
    }
    Ok(neg as f64 / pos as f64)
}

/// Mean weighted BCE over a set of graphs, recorded on `tape`.
pub fn mean_bce(
    model: &DecoderModel,
    tape: &mut Tape,
    p: &Bound,
    graphs: &[&SyndromeGraph],
    labels: &[f64],
    pos_weight: f64,
) -> Result<Var> {
    let logits = graphs.iter().map(|g| model.forward(tape, p, g)).collect::<Result<Vec<_>>>()?;
    let row = tape.concat_cols(&logits)?;
    let losses = tape.weighted_bce(row, labels, pos_weight)?;
    let total = tape.sum(losses)?;
    tape.scale(total, 1.0 / graphs.len() as f64)
}

/// Loss terms of one mini-batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub clean: f64,
    /// Zero when the batch carries no adversarial examples.
    pub adversarial: f64,
    pub total: f64,
}

/// Records `L_clean + α·L_adv` for one mini-batch; adversarial examples are
/// all labeled 0.
pub fn batch_objective(
    model: &DecoderModel,
    tape: &mut Tape,
    p: &Bound,
    clean: &[(&SyndromeGraph, u8)],
    adversarial: &[&SyndromeGraph],
    alpha: f64,
    pos_weight: f64,
) -> Result<(Var, BatchLoss)> {
    let graphs: Vec<&SyndromeGraph> = clean.iter().map(|(g, _)| *g).collect();
    let labels: Vec<f64> = clean.iter().map(|(_, y)| f64::from(*y)).collect();
    let l_clean = mean_bce(model, tape, p, &graphs, &labels, pos_weight)?;
    let clean_value = tape.value(l_clean).item()?;
    if adversarial.is_empty() {
        return Ok((l_clean, BatchLoss { clean: clean_value, adversarial: 0.0, total: clean_value }));
    }
    let zeros = vec![0.0; adversarial.len()];
    let l_adv = mean_bce(model, tape, p, adversarial, &zeros, pos_weight)?;
    let adv_value = tape.value(l_adv).item()?;
    let weighted = tape.scale(l_adv, alpha)?;
    let total = tape.add(l_clean, weighted)?;
    let total_value = tape.value(total).item()?;
    Ok((total, BatchLoss { clean: clean_value, adversarial: adv_value, total: total_value }))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DecoderModel,
    pub curve: Vec<CurveRow>,
    pub batches: Vec<BatchLoss>,
    pub pos_weight: f64,
}

/// Adversarial examples mixed into every epoch of [`fit`].
pub struct AdversarialMix<'a> {
    pub graphs: &'a [SyndromeGraph],
    pub alpha: f64,
}

/// Mini-batch training of `model` for `epochs` epochs on the train split,
/// scoring the test split after each epoch.
///
/// The clean shuffle and the adversarial shuffle draw from separate streams,
/// so an empty mix or `α = 0` follows the same trajectory as clean training.
pub fn fit(
    mut model: DecoderModel,
    ds: &Dataset,
    split: &Split,
    epochs: usize,
    seed: u64,
    mix: Option<AdversarialMix<'_>>,
) -> Result<TrainOutcome> {
    let w_p = pos_weight(ds, &split.train)?;
    let graphs = ds
        .records
        .iter()
        .map(|r| to_graph(r, ds.n_s, ds.t))
        .collect::<Result<Vec<_>>>()?;
    let adam = Adam::new(model.config.lr);
    let batch = model.config.batch;
    let mut clean_rng = rng(stage_seed(seed, "clean-shuffle"));
    let mut adv_rng = rng(stage_seed(seed, "adversarial-shuffle"));
    let mut order = split.train.clone();
    let n_adv = mix.as_ref().map_or(0, |m| m.graphs.len());
    let mut adv_order: Vec<usize> = (0..n_adv).collect();
    let mut curve = Vec::with_capacity(epochs);
    let mut batches = Vec::new();

    for epoch in 1..=epochs {
        order.shuffle(&mut clean_rng);
        if n_adv > 0 {
            adv_order.shuffle(&mut adv_rng);
        }
        let n_batches = order.len().div_ceil(batch);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let clean: Vec<(&SyndromeGraph, u8)> = chunk.iter().map(|&i| (&graphs[i], ds.records[i].label)).collect();
            let (adv, alpha): (Vec<&SyndromeGraph>, f64) = match &mix {
                Some(m) if n_adv > 0 => {
                    let lo = b * n_adv / n_batches;
                    let hi = (b + 1) * n_adv / n_batches;
                    (adv_order[lo..hi].iter().map(|&k| &m.graphs[k]).collect(), m.alpha)
                }
                _ => (Vec::new(), 0.0),
            };
            let mut tape = Tape::new();
            let p = Bound::new(&mut tape, &model.params);
            let (loss, parts) = batch_objective(&model, &mut tape, &p, &clean, &adv, alpha, w_p)?;
            model.params.zero_grad();
            tape.backward(loss, &mut model.params)?;
            adam.step(&mut model.params)?;
            loss_sum += parts.total * chunk.len() as f64;
            batches.push(parts);
        }
        let test_accuracy = evaluate(&model, ds, &split.test)?.accuracy;
        curve.push(CurveRow { epoch, loss: loss_sum / order.len() as f64, test_accuracy });
    }
    Ok(TrainOutcome { model, curve, batches, pos_weight: w_p })
}

/// Initializes a decoder from `seed` and trains it on the dataset's split.
pub fn train(ds: &Dataset, config: &DecoderConfig, seed: u64) -> Result<TrainOutcome> {
    if ds.is_empty() {
        return Err(Error::Contract("cannot train on an empty dataset".into()));
    }
    if config.in_dim != ds.t {
        return Err(Error::Config(format!("in_dim {} does not match dataset t={}", config.in_dim, ds.t)));
    }
    let split = ds.split();
    pos_weight(ds, &split.train)?;
    let model = DecoderModel::init(config.clone(), stage_seed(seed, "decoder-init"))?;
    fit(model, ds, &split, config.epochs, stage_seed(seed, "decoder-fit"), None)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub accuracy: f64,
    /// `None` when the split has no positives.
    pub recall_pos: Option<f64>,
    pub recall_neg: Option<f64>,
}

/// Confusion counts at the `P_L > 0.5` threshold.
pub fn evaluate<C: Classifier + ?Sized>(model: &C, ds: &Dataset, indices: &[usize]) -> Result<Metrics> {
    let preds = indices
        .par_iter()
        .map(|&i| {
            let g = to_graph(&ds.records[i], ds.n_s, ds.t)?;
            Ok((model.predicts_positive(&g)?, ds.records[i].label == 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = Metrics { n: preds.len(), ..Metrics::default() };
    for (pred, truth) in preds {
        match (pred, truth) {
            (true, true) => m.true_pos += 1,
            (false, false) => m.true_neg += 1,
            (true, false) => m.false_pos += 1,
            (false, true) => m.false_neg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
    m.accuracy = ratio(m.true_pos + m.true_neg, m.n).unwrap_or(0.0);
    m.recall_pos = ratio(m.true_pos, m.true_pos + m.false_neg);
    m.recall_neg = ratio(m.true_neg, m.true_neg + m.false_pos);
    Ok(m)
}
