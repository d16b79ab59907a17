//! Labeled syndrome datasets: synthetic generation, the exact Bayes
//! posterior, and the on-disk formats.

mod io;
mod oracle;
mod repcode;
mod teacher;

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use io::{export_01, import_01, parse_dataset, read_dataset, render_dataset, write_dataset};
pub use oracle::{bayes_oracle, BayesTable, DEFAULT_ENUMERATION_BUDGET};
pub use repcode::{ErrorConfig, DATA_QUBITS, DETECTORS};
pub use teacher::Teacher;

use crate::error::{Error, Result};
use crate::seeding::{splitmix64, stream_rng};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyndromeRecord {
    /// Node-major event bits, `bits[node * t + time]`.
    pub bits: Vec<u8>,
    /// 1 when the logical observable flipped.
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub n_s: usize,
    pub t: usize,
    pub records: Vec<SyndromeRecord>,
    pub split_seed: u64,
}

/// Record indices of the deterministic 80/20 train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn new(n_s: usize, t: usize, split_seed: u64) -> Self {
        Dataset { n_s, t, records: Vec::new(), split_seed }
    }

    pub fn push(&mut self, rec: SyndromeRecord) -> Result<()> {
        if rec.bits.len() != self.n_s * self.t {
            return Err(Error::Dimension(format!(
                "record has {} bits, dataset expects {}",
                rec.bits.len(),
                self.n_s * self.t
            )));
        }
        if rec.bits.iter().any(|&b| b > 1) || rec.label > 1 {
            return Err(Error::Contract("record bits and label must be 0 or 1".into()));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(n_neg, n_pos)` over the given record indices.
    pub fn class_counts(&self, indices: &[usize]) -> (usize, usize) {
        let pos = indices.iter().filter(|&&i| self.records[i].label == 1).count();
        (indices.len() - pos, pos)
    }

    /// A record lands in the test fifth when its hash under the split seed is 0 mod 5.
    pub fn split(&self) -> Split {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.records.len())
            .partition(|&i| splitmix64(self.split_seed ^ splitmix64(i as u64)) % 5 == 0);
        Split { train, test }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Distance-5 repetition code under phenomenological noise; the label is
    /// the final value of data bit 0.
    RepCode,
    /// Syndromes from the repetition-code process, labels drawn from a fixed
    /// random teacher network.
    Teacher,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rep-code" => Ok(NoiseMode::RepCode),
            "teacher" => Ok(NoiseMode::Teacher),
            other => Err(Error::Config(format!("unknown noise mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    /// Per-round data-bit flip probability.
    pub p: f64,
    /// Measurement readout flip probability.
    pub q: f64,
    pub rounds: usize,
    pub teacher_seed: u64,
}

impl NoiseModel {
    pub fn rep_code(p: f64, q: f64, rounds: usize) -> Self {
        NoiseModel { mode: NoiseMode::RepCode, p, q, rounds, teacher_seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::Config(format!("{name}={v} outside [0, 0.5]")));
            }
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_s(&self) -> usize {
        DETECTORS
    }
}

/// Draws `n` labeled records. Record `i` uses its own RNG stream, so the
/// result is identical however the work is scheduled.
pub fn generate(model: &NoiseModel, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let teacher = match model.mode {
        NoiseMode::Teacher => Some(Teacher::calibrated(model)?),
        NoiseMode::RepCode => None,
    };
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let cfg = ErrorConfig::sample(model.p, model.q, model.rounds, &mut rng);
            let (bits, label) = cfg.outcome();
            let label = match &teacher {
                Some(t) => u8::from(rng.gen::<f64>() < t.posterior(&bits)),
                None => label,
            };
            SyndromeRecord { bits, label }
        })
        .collect();
    Ok(Dataset { n_s: DETECTORS, t: model.rounds, records, split_seed: seed })
}
