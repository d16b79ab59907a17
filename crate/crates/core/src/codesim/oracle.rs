use std::collections::HashMap;

use super::repcode::{ErrorConfig, DETECTORS};
use super::{NoiseMode, NoiseModel, SyndromeRecord, Teacher};
use crate::error::{Error, Result};

/// Largest number of fault configurations enumerated by default (2^24).
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 24;

fn pack(bits: &[u8]) -> u64 {
    bits.iter().enumerate().fold(0, |k, (i, &b)| k | (u64::from(b) << i))
}

/// Exact joint distribution `P(syndrome, label)` of the repetition-code
/// model, built by enumerating every fault configuration.
#[derive(Clone, Debug)]
pub struct BayesTable {
    pub n_s: usize,
    pub t: usize,
    joint: HashMap<u64, [f64; 2]>,
}

impl BayesTable {
    pub fn build(model: &NoiseModel, budget: u64) -> Result<Self> {
        model.validate()?;
        if model.mode != NoiseMode::RepCode {
            return Err(Error::Contract("enumeration oracle needs rep-code mode".into()));
        }
        let locations = ErrorConfig::n_locations(model.rounds);
        if locations >= 64 || (1u64 << locations) > budget {
            return Err(Error::Budget(format!(
                "2^{locations} fault configurations exceed the enumeration budget of {budget}"
            )));
        }
        let mut joint: HashMap<u64, [f64; 2]> = HashMap::new();
        for k in 0..1u64 << locations {
            let cfg = ErrorConfig::from_index(k, model.rounds);
            let pr = cfg.probability(model.p, model.q);
            if pr == 0.0 {
                continue;
            }
            let (bits, label) = cfg.outcome();
            joint.entry(pack(&bits)).or_insert([0.0; 2])[label as usize] += pr;
        }
        Ok(BayesTable { n_s: DETECTORS, t: model.rounds, joint })
    }

    /// `[P(s, label=0), P(s, label=1)]`; zero for syndromes that cannot occur.
    pub fn joint(&self, bits: &[u8]) -> [f64; 2] {
        self.joint.get(&pack(bits)).copied().unwrap_or([0.0; 2])
    }

    /// `P(label = 1 | syndrome)`, or 0 for a syndrome of probability zero.
    pub fn posterior(&self, bits: &[u8]) -> f64 {
        let [p0, p1] = self.joint(bits);
        if p0 + p1 > 0.0 {
            p1 / (p0 + p1)
        } else {
            0.0
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.joint.values().map(|[a, b]| a + b).sum()
    }

    pub fn positive_rate(&self) -> f64 {
        self.joint.values().map(|[_, b]| b).sum()
    }

    /// Expected accuracy of thresholding the posterior at 1/2.
    pub fn expected_accuracy(&self) -> f64 {
        self.joint.values().map(|[a, b]| if b > a { *b } else { *a }).sum()
    }

    /// Accuracy of the posterior-threshold classifier on concrete records.
    pub fn accuracy_on<'a>(&self, records: impl IntoIterator<Item = &'a SyndromeRecord>) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for r in records {
            let pred = u8::from(self.posterior(&r.bits) > 0.5);
            hit += usize::from(pred == r.label);
            n += 1;
        }
        hit as f64 / n.max(1) as f64
    }
}

/// Exact `P(label = 1 | syndrome)` under `model`.
pub fn bayes_oracle(model: &NoiseModel, syndrome: &[u8]) -> Result<f64> {
    match model.mode {
        NoiseMode::RepCode => Ok(BayesTable::build(model, DEFAULT_ENUMERATION_BUDGET)?.posterior(syndrome)),
        NoiseMode::Teacher => Ok(Teacher::calibrated(model)?.posterior(syndrome)),
    }
}
