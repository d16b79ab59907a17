use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, ActorModel, Environment, EpisodeTrace, Mode, SUCCESS_THRESHOLD};
use crate::codesim::Dataset;
use crate::decoder::Classifier;
use crate::error::{Error, Result};
use crate::graph::{to_graph, ActionIndex, SyndromeGraph};
use crate::report::AttackReport;
use crate::seeding::rng;

/// Default cap on flip subsets tried per sample by [`brute_force_attack`].
pub const DEFAULT_SUBSET_BUDGET: u64 = 1 << 20;

/// Records among `indices` with label 0 that the decoder classifies negative,
/// as `(record index, graph)`.
pub fn attack_pool<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    ds: &Dataset,
    indices: &[usize],
) -> Result<Vec<(usize, SyndromeGraph)>> {
    let kept = indices
        .par_iter()
        .filter(|&&i| ds.records[i].label == 0)
        .map(|&i| {
            let g = to_graph(&ds.records[i], ds.n_s, ds.t)?;
            Ok((env.prob(&g)? <= SUCCESS_THRESHOLD).then_some((i, g)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(kept.into_iter().flatten().collect())
}

/// One greedy episode per pool graph, in pool order.
pub fn attack_episodes<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    actor: &ActorModel,
    pool: &[SyndromeGraph],
) -> Result<Vec<EpisodeTrace>> {
    pool.par_iter()
        .map(|g| run_episode(env, actor, g, Mode::Greedy, &mut rng(0)))
        .collect()
}

fn trace_actions(t: &EpisodeTrace) -> Vec<usize> {
    t.actions.iter().map(|a| a.0).collect()
}

pub fn attack_eval<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    actor: &ActorModel,
    pool: &[SyndromeGraph],
) -> Result<AttackReport> {
    let first = pool.first().ok_or_else(|| Error::Contract("attack pool is empty".into()))?;
    let traces = attack_episodes(env, actor, pool)?;
    let actions: Vec<Option<Vec<usize>>> = traces.iter().map(|t| t.success.then(|| trace_actions(t))).collect();
    AttackReport::from_outcomes(first.n_nodes(), first.rounds(), actions.iter().map(|a| a.as_deref()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub budget: usize,
    pub report: AttackReport,
    /// `min_flip_counts[k]` samples need exactly `k` flips; index 0 is unused.
    pub min_flip_counts: Vec<usize>,
    /// Smallest successful flip set per pool sample, lexicographically first.
    pub optimal: Vec<Option<Vec<usize>>>,
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn smallest_attack<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    g: &SyndromeGraph,
    k: usize,
) -> Result<Option<Vec<usize>>> {
    let n = g.n_actions();
    for size in 1..=k.min(n) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let mut probe = g.clone();
            for &b in &combo {
                probe = probe.apply_flip(ActionIndex(b))?;
            }
            if env.prob(&probe)? > SUCCESS_THRESHOLD {
                return Ok(Some(combo));
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Exact attack oracle: tries every set of up to `k` distinct flips (flips
/// commute, so order is irrelevant) and keeps the smallest success.
pub fn brute_force_attack<C: Classifier + ?Sized>(
    env: &Environment<'_, C>,
    pool: &[SyndromeGraph],
    k: usize,
    subset_budget: u64,
) -> Result<OracleReport> {
    let first = pool.first().ok_or_else(|| Error::Contract("attack pool is empty".into()))?;
    let n = first.n_actions() as u64;
    let subsets: u64 = (1..=(k as u64).min(n)).map(|s| binomial(n, s)).fold(0, u64::saturating_add);
    if subsets > subset_budget {
        return Err(Error::Budget(format!(
            "{subsets} flip subsets per sample exceed the budget of {subset_budget}"
        )));
    }
    let optimal = pool.par_iter().map(|g| smallest_attack(env, g, k)).collect::<Result<Vec<_>>>()?;
    let mut min_flip_counts = vec![0; k + 1];
    for o in optimal.iter().flatten() {
        min_flip_counts[o.len()] += 1;
    }
    let report = AttackReport::from_outcomes(first.n_nodes(), first.rounds(), optimal.iter().map(|o| o.as_deref()))?;
    Ok(OracleReport { budget: k, report, min_flip_counts, optimal })
}
