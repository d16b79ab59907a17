//! Reinforcement-learning adversary against a frozen decoder.
//!
//! An episode starts from a syndrome the decoder correctly calls negative
//! and flips one bit per step until `P_L > 0.5` or the step budget runs out.
//! The reward for a step is the change in `P_L` it caused.

mod actor;
mod attack;
pub mod probes;
mod reinforce;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

pub use actor::{ActorConfig, ActorModel};
pub use attack::{attack_episodes, attack_eval, attack_pool, brute_force_attack, OracleReport, DEFAULT_SUBSET_BUDGET};
pub use reinforce::{reinforce_train, reinforce_train_on_pool, AdversaryConfig, EpisodeStat, TrainedActor};

use crate::decoder::Classifier;
use crate::error::{Error, Result};
use crate::graph::{ActionIndex, SyndromeGraph};

pub const SUCCESS_THRESHOLD: f64 = 0.5;

/// A frozen decoder plus the episode step budget.
pub struct Environment<'a, C: Classifier + ?Sized> {
    pub decoder: &'a C,
    pub max_steps: usize,
}

impl<'a, C: Classifier + ?Sized> Environment<'a, C> {
    pub fn new(decoder: &'a C, max_steps: usize) -> Self {
        Environment { decoder, max_steps }
    }

    pub fn prob(&self, g: &SyndromeGraph) -> Result<f64> {
        self.decoder.prob(g)
    }

    /// `P_L(next) - P_L(current)`.
    pub fn reward(&self, current: &SyndromeGraph, next: &SyndromeGraph) -> Result<f64> {
        Ok(self.prob(next)? - self.prob(current)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    /// `states[k]` is the graph the `k`-th action was taken in.
    pub states: Vec<SyndromeGraph>,
    pub actions: Vec<ActionIndex>,
    pub rewards: Vec<f64>,
    pub final_state: SyndromeGraph,
    pub initial_prob: f64,
    pub final_prob: f64,
    pub success: bool,
}

impl EpisodeTrace {
    pub fn flips(&self) -> usize {
        self.actions.len()
    }
}

/// Highest-probability action, lowest index on ties.
pub fn greedy_action(probs: &[f64]) -> ActionIndex {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    ActionIndex(best)
}

pub fn run_episode<C: Classifier + ?Sized, R: Rng>(
    env: &Environment<'_, C>,
    actor: &ActorModel,
    start: &SyndromeGraph,
    mode: Mode,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let initial_prob = env.prob(start)?;
    if initial_prob > SUCCESS_THRESHOLD {
        return Err(Error::Contract(format!(
            "episode start already classified positive (P_L = {initial_prob})"
        )));
    }
    let mut state = start.clone();
    let mut prob = initial_prob;
    let mut trace = EpisodeTrace {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        final_state: start.clone(),
        initial_prob,
        final_prob: initial_prob,
        success: false,
    };
    for _ in 0..env.max_steps {
        let probs = actor.policy(&state)?;
        let action = match mode {
            Mode::Greedy => greedy_action(&probs),
            Mode::Sample => {
                let dist = WeightedIndex::new(&probs)
                    .map_err(|e| Error::Numeric(format!("policy is not a distribution: {e}")))?;
                ActionIndex(dist.sample(rng))
            }
        };
        let next = state.apply_flip(action)?;
        let next_prob = env.prob(&next)?;
        trace.states.push(std::mem::replace(&mut state, next));
        trace.actions.push(action);
        trace.rewards.push(next_prob - prob);
        prob = next_prob;
        if prob > SUCCESS_THRESHOLD {
            trace.success = true;
            break;
        }
    }
    trace.final_state = state;
    trace.final_prob = prob;
    Ok(trace)
}

/// `G_t = Σ_k γ^k r_{t+k}`, accumulated from the end.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::probes::{ConstantLogit, PlantedTrigger};
    use super::*;
    use crate::decoder::{DecoderConfig, DecoderModel};
    use crate::seeding::{rng, stream_rng};

    fn actor() -> ActorModel {
        ActorModel::init(ActorConfig::for_rounds(2), 31).unwrap()
    }

    #[test]
    fn reward_is_the_probability_change() {
        struct Two;
        impl Classifier for Two {
            fn logit(&self, g: &SyndromeGraph) -> Result<f64> {
                let p: f64 = if g.feature(0, 0) != 0.0 { 0.8 } else { 0.3 };
                Ok((p / (1.0 - p)).ln())
            }
        }
        let env = Environment::new(&Two, 5);
        let a = SyndromeGraph::zeros(4, 2);
        let b = a.apply_flip(ActionIndex(0)).unwrap();
        assert!((env.reward(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(env.reward(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn returns_follow_the_backward_recursion() {
        let g = discounted_returns(&[0.1, 0.2, 0.3], 0.5);
        for (x, y) in g.iter().zip([0.275, 0.35, 0.3]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(discounted_returns(&[0.1, -0.4, 0.3], 0.0), vec![0.1, -0.4, 0.3]);
    }

    #[test]
    fn policy_sums_to_one() {
        let a = actor();
        let mut r = rng(4);
        for _ in 0..100 {
            let bits: Vec<u8> = (0..8).map(|_| r.gen_range(0..2)).collect();
            let p = a.policy(&SyndromeGraph::from_bits(&bits, 4, 2).unwrap()).unwrap();
            assert_eq!(p.len(), 8);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn policy_is_permutation_equivariant() {
        let a = actor();
        let g = SyndromeGraph::from_bits(&[1, 0, 0, 0, 0, 1, 1, 1], 4, 2).unwrap();
        let perm = [2, 0, 3, 1];
        let p = a.policy(&g).unwrap();
        let q = a.policy(&g.permute_nodes(&perm).unwrap()).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            for t in 0..2 {
                assert!((q[i * 2 + t] - p[src * 2 + t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_policy_sampling_is_reproducible() {
        // a zero policy head makes every logit equal
        let mut a = actor();
        for name in ["policy.weight", "policy.bias"] {
            let id = a.params.id(name).unwrap();
            let n = a.params.value(id).numel();
            a.params.set_values(id, vec![0.0; n]).unwrap();
        }
        let env = Environment::new(&ConstantLogit(-4.0), 5);
        let start = SyndromeGraph::zeros(4, 2);
        let run = |s| run_episode(&env, &a, &start, Mode::Sample, &mut stream_rng(s, 0)).unwrap().actions;
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn greedy_run_finds_the_planted_trigger_from_zero() {
        let mut a = actor();
        // bias the head toward time 1 for every node; ties fall to node 0
        let id = a.params.id("policy.bias").unwrap();
        a.params.set_values(id, vec![0.0, 3.0]).unwrap();
        let w = a.params.id("policy.weight").unwrap();
        let n = a.params.value(w).numel();
        a.params.set_values(w, vec![0.0; n]).unwrap();
        let trigger = PlantedTrigger::new(0, 1);
        let env = Environment::new(&trigger, 5);
        let tr = run_episode(&env, &a, &SyndromeGraph::zeros(4, 2), Mode::Greedy, &mut rng(0)).unwrap();
        assert_eq!(tr.actions, vec![ActionIndex(1)]);
        assert!(tr.success);
        assert_eq!(tr.flips(), 1);
    }

    #[test]
    fn constant_negative_decoder_exhausts_the_budget() {
        let env = Environment::new(&ConstantLogit(-50.0), 5);
        let tr = run_episode(&env, &actor(), &SyndromeGraph::zeros(4, 2), Mode::Sample, &mut rng(1)).unwrap();
        assert_eq!(tr.flips(), 5);
        assert!(!tr.success);
        assert_eq!(tr.rewards.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn positive_start_is_a_contract_error() {
        let env = Environment::new(&ConstantLogit(1.0), 5);
        let err = run_episode(&env, &actor(), &SyndromeGraph::zeros(4, 2), Mode::Greedy, &mut rng(1)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn rewards_telescope_to_the_probability_change() {
        let dec = DecoderModel::init(DecoderConfig::for_rounds(2), 17).unwrap();
        let env = Environment::new(&dec, 5);
        let a = actor();
        let mut r = rng(8);
        let mut checked = 0;
        for i in 0..200u64 {
            let bits: Vec<u8> = (0..8).map(|_| r.gen_range(0..2)).collect();
            let g = SyndromeGraph::from_bits(&bits, 4, 2).unwrap();
            if env.prob(&g).unwrap() > 0.5 {
                continue;
            }
            let tr = run_episode(&env, &a, &g, Mode::Sample, &mut stream_rng(9, i)).unwrap();
            let sum: f64 = tr.rewards.iter().sum();
            assert!((sum - (tr.final_prob - tr.initial_prob)).abs() < 1e-12);
            assert!(tr.rewards.iter().all(|r| (-1.0..=1.0).contains(r)));
            assert_eq!(tr.success, tr.final_prob > 0.5);
            assert!(tr.flips() <= 5);
            checked += 1;
        }
        assert!(checked > 20);
    }
}
