//! Run configuration: defaults, overridden by a TOML file, overridden by flags.

use std::path::Path;

use advqec_core::adversary::{ActorConfig, AdversaryConfig};
use advqec_core::codesim::{NoiseMode, NoiseModel, DEFAULT_ENUMERATION_BUDGET};
use advqec_core::decoder::DecoderConfig;
use advqec_core::hardening::RobustConfig;
use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

/// Every tunable of the pipeline. Keys match the long flag names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub seed: u64,
    pub out: String,
    pub workers: usize,

    pub mode: NoiseMode,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub rounds: usize,
    pub teacher_seed: u64,
    pub enumeration_budget: u64,

    pub hidden_dim: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,

    pub episodes: usize,
    pub gamma: f64,
    pub max_steps: usize,
    pub actor_lr: f64,
    pub actor_hidden_dim: usize,
    pub actor_heads: usize,

    pub oracle_budget: usize,
    pub subset_budget: u64,

    pub alpha: f64,
    pub harden_epochs: usize,
    pub warm_start: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dec = DecoderConfig::for_rounds(2);
        let adv = AdversaryConfig::for_rounds(2);
        let robust = RobustConfig::default();
        RunConfig {
            seed: 1,
            out: "out".into(),
            workers: 0,
            mode: NoiseMode::RepCode,
            n: 10_000,
            p: 0.05,
            q: 0.05,
            rounds: 2,
            teacher_seed: 0,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            hidden_dim: dec.hidden_dim,
            heads: dec.heads,
            mlp_hidden: dec.mlp_hidden,
            lr: dec.lr,
            epochs: dec.epochs,
            batch: dec.batch,
            episodes: adv.episodes,
            gamma: adv.gamma,
            max_steps: 5,
            actor_lr: adv.lr,
            actor_hidden_dim: adv.actor.hidden_dim,
            actor_heads: adv.actor.heads,
            oracle_budget: 5,
            subset_budget: advqec_core::adversary::DEFAULT_SUBSET_BUDGET,
            alpha: robust.alpha,
            harden_epochs: robust.epochs,
            warm_start: robust.warm_start,
        }
    }
}

/// Optional overrides, parsed both from the config file and from flags.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// Master seed; every stage derives its own stream from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Threads for evaluation stages (0 = all cores); training ignores it
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Noise source: rep-code or teacher
    #[arg(long, global = true)]
    pub mode: Option<NoiseMode>,
    /// Number of records to generate
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Per-round data-bit flip probability
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Measurement misread probability
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Measurement rounds T
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub teacher_seed: Option<u64>,
    /// Cap on fault configurations enumerated by the Bayes oracle
    #[arg(long, global = true)]
    pub enumeration_budget: Option<u64>,

    #[arg(long, global = true)]
    pub hidden_dim: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub mlp_hidden: Option<usize>,
    /// Decoder learning rate
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Decoder training epochs
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,

    /// REINFORCE episodes
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Flip budget M per episode
    #[arg(long, global = true)]
    pub max_steps: Option<usize>,
    #[arg(long, global = true)]
    pub actor_lr: Option<f64>,
    #[arg(long, global = true)]
    pub actor_hidden_dim: Option<usize>,
    #[arg(long, global = true)]
    pub actor_heads: Option<usize>,

    /// Largest flip-set size tried by oracle-attack
    #[arg(long, global = true)]
    pub oracle_budget: Option<usize>,
    /// Cap on flip subsets per sample for oracle-attack
    #[arg(long, global = true)]
    pub subset_budget: Option<u64>,

    /// Weight of the adversarial loss term
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub harden_epochs: Option<usize>,
    /// Start hardening from the given decoder's weights
    #[arg(long, global = true)]
    pub warm_start: Option<bool>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($f:ident),*) => {
        $(if let Some(v) = $o.$f.clone() { $cfg.$f = v; })*
    };
}

impl RunConfig {
    pub fn apply(mut self, o: &Overrides) -> Self {
        apply!(
            self, o, seed, out, workers, mode, n, p, q, rounds, teacher_seed, enumeration_budget, hidden_dim, heads,
            mlp_hidden, lr, epochs, batch, episodes, gamma, max_steps, actor_lr, actor_hidden_dim, actor_heads,
            oracle_budget, subset_budget, alpha, harden_epochs, warm_start
        );
        self
    }

    /// Defaults, then `file` (if any), then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let from_file: Overrides =
                toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.message())))?;
            cfg = cfg.apply(&from_file);
        }
        Ok(cfg.apply(flags))
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { mode: self.mode, p: self.p, q: self.q, rounds: self.rounds, teacher_seed: self.teacher_seed }
    }

    pub fn decoder(&self, t: usize) -> DecoderConfig {
        DecoderConfig {
            in_dim: t,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            mlp_hidden: self.mlp_hidden,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
        }
    }

    pub fn adversary(&self, t: usize) -> AdversaryConfig {
        AdversaryConfig {
            episodes: self.episodes,
            gamma: self.gamma,
            lr: self.actor_lr,
            actor: ActorConfig { in_dim: t, hidden_dim: self.actor_hidden_dim, heads: self.actor_heads },
        }
    }

    pub fn robust(&self) -> RobustConfig {
        RobustConfig { alpha: self.alpha, epochs: self.harden_epochs, warm_start: self.warm_start }
    }
}

/// A bad config file or flag value.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
