use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{attack_pool, discounted_returns, run_episode, ActorConfig, ActorModel, Environment, Mode};
use crate::autodiff::{Adam, Tape};
use crate::codesim::Dataset;
use crate::decoder::Classifier;
use crate::error::{Error, Result};
use crate::gat::Bound;
use crate::graph::SyndromeGraph;
use crate::seeding::{rng, stage_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub lr: f64,
    pub actor: ActorConfig,
}

impl AdversaryConfig {
    pub fn for_rounds(t: usize) -> Self {
        AdversaryConfig { episodes: 4000, gamma: 0.95, lr: 1e-3, actor: ActorConfig::for_rounds(t) }
    }
}

/// Per-episode training statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub success: bool,
    pub flips: usize,
    pub total_reward: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedActor {
    pub actor: ActorModel,
    pub episodes: Vec<EpisodeStat>,
}

/// Plain REINFORCE on the policy loss `-Σ_t log π(a_t|s_t) G_t`, one
/// optimizer step per sampled episode; starts drawn uniformly from `pool`.
pub fn reinforce_train_on_pool<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    pool: &[SyndromeGraph],
    cfg: &AdversaryConfig,
    seed: u64,
) -> Result<TrainedActor> {
    if pool.is_empty() {
        return Err(Error::Contract("empty start pool: decoder classifies nothing correctly negative".into()));
    }
    if !(0.0..=1.0).contains(&cfg.gamma) || !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("gamma {} / lr {} out of range", cfg.gamma, cfg.lr)));
    }
    let mut actor = ActorModel::init(cfg.actor.clone(), stage_seed(seed, "actor-init"))?;
    let adam = Adam::new(cfg.lr);
    let mut r = rng(stage_seed(seed, "episodes"));
    let mut stats = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let start = &pool[r.gen_range(0..pool.len())];
        let trace = run_episode(env, &actor, start, Mode::Sample, &mut r)?;
        let returns = discounted_returns(&trace.rewards, cfg.gamma);

        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &actor.params);
        let mut terms = Vec::with_capacity(returns.len());
        for ((s, &a), g) in trace.states.iter().zip(&trace.actions).zip(&returns) {
            let lp = actor.log_prob(&mut tape, &p, s, a)?;
            terms.push(tape.scale(lp, -g)?);
        }
        let row = tape.concat_cols(&terms)?;
        let loss = tape.sum(row)?;
        actor.params.zero_grad();
        tape.backward(loss, &mut actor.params)?;
        adam.step(&mut actor.params)?;

        stats.push(EpisodeStat {
            episode,
            success: trace.success,
            flips: trace.flips(),
            total_reward: trace.rewards.iter().sum(),
        });
    }
    Ok(TrainedActor { actor, episodes: stats })
}

/// Trains against starts taken from `indices` of `ds` that are labeled 0
/// and classified negative.
pub fn reinforce_train<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    ds: &Dataset,
    indices: &[usize],
    cfg: &AdversaryConfig,
    seed: u64,
) -> Result<TrainedActor> {
    let pool: Vec<SyndromeGraph> = attack_pool(env, ds, indices)?.into_iter().map(|(_, g)| g).collect();
    reinforce_train_on_pool(env, &pool, cfg, seed)
}
