//! Adversarial example generation and robust retraining of the decoder.

use serde::{Deserialize, Serialize};

use crate::adversary::{attack_episodes, attack_pool, ActorModel, Environment};
use crate::codesim::Dataset;
use crate::decoder::{fit, AdversarialMix, DecoderModel, TrainOutcome};
use crate::error::{Error, Result};
use crate::graph::SyndromeGraph;
use crate::seeding::stage_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialExample {
    pub graph: SyndromeGraph,
    /// Always 0: the perturbation does not change the true outcome.
    pub label: u8,
    pub source: usize,
    pub actions: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdversarialSet {
    pub examples: Vec<AdversarialExample>,
}

impl AdversarialSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn graphs(&self) -> Vec<SyndromeGraph> {
        self.examples.iter().map(|e| e.graph.clone()).collect()
    }
}

/// Runs one greedy episode per correctly-classified negative among `indices`
/// and keeps the terminal graph of every successful attack.
pub fn generate_adversarial(
    actor: &ActorModel,
    decoder: &DecoderModel,
    max_steps: usize,
    ds: &Dataset,
    indices: &[usize],
) -> Result<AdversarialSet> {
    let env = Environment::new(decoder, max_steps);
    let pool = attack_pool(&env, ds, indices)?;
    if pool.is_empty() {
        return Err(Error::Contract("empty start pool: decoder classifies nothing correctly negative".into()));
    }
    let graphs: Vec<SyndromeGraph> = pool.iter().map(|(_, g)| g.clone()).collect();
    let traces = attack_episodes(&env, actor, &graphs)?;
    let examples = pool
        .iter()
        .zip(traces)
        .filter(|(_, t)| t.success)
        .map(|((source, _), t)| AdversarialExample {
            actions: t.actions.iter().map(|a| a.0).collect(),
            graph: t.final_state,
            label: 0,
            source: *source,
        })
        .collect();
    Ok(AdversarialSet { examples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    pub alpha: f64,
    pub epochs: usize,
    /// Start from the given decoder's weights rather than a fresh init.
    pub warm_start: bool,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig { alpha: 1.0, epochs: 10, warm_start: true }
    }
}

/// Retrains on `L_clean + α·L_adv`, where both terms are the class-weighted
/// BCE and every adversarial example carries label 0.
pub fn robust_train(
    decoder: &DecoderModel,
    ds: &Dataset,
    adv: &AdversarialSet,
    cfg: &RobustConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be non-negative, got {}", cfg.alpha)));
    }
    if adv.examples.iter().any(|e| e.label != 0) {
        return Err(Error::Contract("adversarial examples must be labeled 0".into()));
    }
    let mut start = if cfg.warm_start {
        decoder.clone()
    } else {
        DecoderModel::init(decoder.config.clone(), stage_seed(seed, "robust-init"))?
    };
    start.params.reset_optimizer();
    let graphs = adv.graphs();
    fit(
        start,
        ds,
        &ds.split(),
        cfg.epochs,
        stage_seed(seed, "robust-fit"),
        Some(AdversarialMix { graphs: &graphs, alpha: cfg.alpha }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::probes::PlantedTrigger;
    use crate::adversary::ActorConfig;
    use crate::autodiff::Tape;
    use crate::codesim::{generate, NoiseModel};
    use crate::decoder::{batch_objective, train, weighted_bce, Classifier, DecoderConfig};
    use crate::gat::Bound;

    fn setup() -> (Dataset, DecoderModel) {
        let ds = generate(&NoiseModel::rep_code(0.1, 0.1, 2), 600, 31).unwrap();
        let cfg = DecoderConfig { in_dim: 2, hidden_dim: 6, heads: 1, mlp_hidden: 6, lr: 1e-2, epochs: 2, batch: 32 };
        let model = train(&ds, &cfg, 1).unwrap().model;
        (ds, model)
    }

    fn fake_adversarial(ds: &Dataset) -> AdversarialSet {
        let examples = (0..40)
            .map(|i| {
                let g = crate::graph::to_graph(&ds.records[i], 4, 2).unwrap();
                AdversarialExample { graph: g.apply_flip(crate::graph::ActionIndex(1)).unwrap(), label: 0, source: i, actions: vec![1] }
            })
            .collect();
        AdversarialSet { examples }
    }

    #[test]
    fn zero_alpha_and_empty_set_match_clean_continuation() {
        let (ds, model) = setup();
        let cfg = RobustConfig { alpha: 0.0, epochs: 2, warm_start: true };
        let with_zero_alpha = robust_train(&model, &ds, &fake_adversarial(&ds), &cfg, 5).unwrap();
        let with_empty = robust_train(&model, &ds, &AdversarialSet::default(), &RobustConfig { alpha: 1.0, ..cfg.clone() }, 5).unwrap();
        let mut clean = model.clone();
        clean.params.reset_optimizer();
        let plain = fit(clean, &ds, &ds.split(), 2, stage_seed(5, "robust-fit"), None).unwrap();
        assert_eq!(with_zero_alpha.model.params.fingerprint(), plain.model.params.fingerprint());
        assert_eq!(with_empty.model.params.fingerprint(), plain.model.params.fingerprint());
        assert_eq!(with_empty.curve, plain.curve);
    }

    #[test]
    fn batch_loss_is_the_hand_summed_objective() {
        let (ds, model) = setup();
        let graphs: Vec<_> = (0..10).map(|i| crate::graph::to_graph(&ds.records[i], 4, 2).unwrap()).collect();
        let clean: Vec<_> = graphs.iter().zip(&ds.records).map(|(g, r)| (g, r.label)).take(6).collect();
        let adv: Vec<_> = graphs[6..].iter().collect();
        let (w, alpha) = (4.2, 0.7);
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &model.params);
        let (loss, parts) = batch_objective(&model, &mut tape, &p, &clean, &adv, alpha, w).unwrap();

        let l_clean: f64 =
            clean.iter().map(|(g, y)| weighted_bce(model.logit(g).unwrap(), *y, w)).sum::<f64>() / clean.len() as f64;
        let l_adv: f64 = adv.iter().map(|g| weighted_bce(model.logit(g).unwrap(), 0, w)).sum::<f64>() / adv.len() as f64;
        assert!((parts.clean - l_clean).abs() < 1e-12);
        assert!((parts.adversarial - l_adv).abs() < 1e-12);
        assert!((tape.value(loss).item().unwrap() - (l_clean + alpha * l_adv)).abs() < 1e-12);
    }

    #[test]
    fn robust_training_emits_one_row_per_epoch_and_is_deterministic() {
        let (ds, model) = setup();
        let adv = fake_adversarial(&ds);
        let cfg = RobustConfig { alpha: 1.0, epochs: 3, warm_start: true };
        let a = robust_train(&model, &ds, &adv, &cfg, 2).unwrap();
        let b = robust_train(&model, &ds, &adv, &cfg, 2).unwrap();
        assert_eq!(a.curve.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(a.model.params.fingerprint(), b.model.params.fingerprint());
        let fresh = robust_train(&model, &ds, &adv, &RobustConfig { warm_start: false, ..cfg }, 2).unwrap();
        assert_ne!(fresh.model.params.fingerprint(), a.model.params.fingerprint());
        assert!(robust_train(&model, &ds, &adv, &RobustConfig { alpha: -1.0, epochs: 1, warm_start: true }, 2).is_err());
    }

    #[test]
    fn planted_trigger_examples_are_sources_with_the_trigger_set() {
        let (ds, model) = setup();
        let trig = PlantedTrigger::new(0, 1);
        let env = Environment::new(&trig, 5);
        let mut actor = ActorModel::init(ActorConfig::for_rounds(2), 0).unwrap();
        let w = actor.params.id("policy.weight").unwrap();
        let n = actor.params.value(w).numel();
        actor.params.set_values(w, vec![0.0; n]).unwrap();
        let b = actor.params.id("policy.bias").unwrap();
        actor.params.set_values(b, vec![0.0, 5.0]).unwrap();

        let zero_node0: Vec<usize> = (0..ds.len()).filter(|&i| ds.records[i].bits[..2] == [0, 0]).collect();
        let pool = attack_pool(&env, &ds, &zero_node0).unwrap();
        let graphs: Vec<_> = pool.iter().map(|(_, g)| g.clone()).collect();
        let traces = attack_episodes(&env, &actor, &graphs).unwrap();
        for ((src, g), t) in pool.iter().zip(&traces) {
            if t.success && t.flips() == 1 {
                assert_eq!(t.final_state, g.apply_flip(crate::graph::ActionIndex(1)).unwrap());
                assert_eq!(ds.records[*src].label, 0);
            }
        }
        drop(model);
    }
}
