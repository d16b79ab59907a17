use std::path::{Path, PathBuf};

use advqec_core::adversary::{attack_eval, attack_pool, brute_force_attack, reinforce_train, Environment};
use advqec_core::checkpoint::{self, Provenance};
use advqec_core::codesim::{
    generate, import_01, read_dataset, write_dataset, BayesTable, Dataset, NoiseMode, SyndromeRecord, Teacher,
};
use advqec_core::decoder::{evaluate, train, Classifier, DecoderModel};
use advqec_core::graph::SyndromeGraph;
use advqec_core::hardening::{generate_adversarial, robust_train};
use advqec_core::report::{compare_reports, emit_curves, emit_heatmap, read_json, write_json, AttackReport};
use advqec_core::seeding::stage_seed;
use anyhow::{bail, Context};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::manifest::Manifest;
use crate::{Cli, Command};

/// Shared state of one subcommand run.
struct Run {
    cfg: RunConfig,
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.output(&p);
        p
    }

    fn data(&mut self, path: &Path) -> anyhow::Result<Dataset> {
        self.manifest.input("data", path)?;
        Ok(read_dataset(path)?)
    }

    fn decoder(&mut self, path: &Path) -> anyhow::Result<DecoderModel> {
        self.manifest.input("decoder", path)?;
        Ok(checkpoint::load_decoder(path)?)
    }

    fn actor(&mut self, path: &Path) -> anyhow::Result<advqec_core::adversary::ActorModel> {
        self.manifest.input("actor", path)?;
        Ok(checkpoint::load_actor(path)?)
    }

    /// Runs `f` on the evaluation thread pool sized by `--workers`.
    fn parallel<T: Send>(&self, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.cfg.workers).build()?;
        Ok(pool.install(f))
    }
}

fn check(cfg: &RunConfig) -> anyhow::Result<()> {
    let bad = |msg: String| Err(ConfigError(msg).into());
    if !(cfg.gamma >= 0.0 && cfg.gamma <= 1.0) {
        return bad(format!("gamma={} outside [0, 1]", cfg.gamma));
    }
    if cfg.max_steps == 0 || cfg.oracle_budget == 0 {
        return bad("max-steps and oracle-budget must be positive".into());
    }
    if !(cfg.alpha >= 0.0) {
        return bad(format!("alpha={} must be non-negative", cfg.alpha));
    }
    cfg.noise().validate()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    pos_weight: f64,
    test: advqec_core::decoder::Metrics,
}

#[derive(Serialize)]
struct HardenSummary {
    adversarial_examples: usize,
    accuracy_before: f64,
    accuracy_after: f64,
    test: advqec_core::decoder::Metrics,
}

#[derive(Serialize)]
struct BayesSummary {
    test_records: usize,
    bayes_accuracy: f64,
    decoder_accuracy: Option<f64>,
}

fn pool_graphs<C: Classifier + ?Sized>(env: &Environment<'_, C>, ds: &Dataset, idx: &[usize]) -> anyhow::Result<Vec<SyndromeGraph>> {
    let pool: Vec<SyndromeGraph> = attack_pool(env, ds, idx)?.into_iter().map(|(_, g)| g).collect();
    if pool.is_empty() {
        bail!(advqec_core::Error::Contract("empty attack pool: decoder classifies no test sample correctly negative".into()));
    }
    Ok(pool)
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    check(&cfg)?;
    let name = cli.command.name();
    let seed = stage_seed(cfg.seed, name);
    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut run = Run { manifest: Manifest::new(name, &cfg, seed), cfg, out };
    if let Some(path) = &cli.config {
        run.manifest.input("config", path)?;
    }

    match &cli.command {
        Command::GenData => {
            let ds = generate(&run.cfg.noise(), run.cfg.n, seed)?;
            let (neg, pos) = ds.class_counts(&(0..ds.len()).collect::<Vec<_>>());
            write_dataset(&ds, &run.path("dataset.synd"))?;
            println!("generated {} records ({neg} negative, {pos} positive)", ds.len());
        }
        Command::Import01 { dets, obs, nodes, detector_order } => {
            run.manifest.input("dets", dets)?;
            run.manifest.input("obs", obs)?;
            let t = run.cfg.rounds;
            let n_s = match nodes {
                Some(n) => *n,
                None => {
                    let text = std::fs::read_to_string(dets).with_context(|| format!("reading {}", dets.display()))?;
                    let width = text.lines().next().map_or(0, |l| l.trim().len());
                    if width == 0 || width % t != 0 {
                        bail!(ConfigError(format!("line width {width} is not a multiple of rounds={t}; pass --nodes")));
                    }
                    width / t
                }
            };
            let mut ds = import_01(dets, obs, n_s, t, detector_order.as_deref())?;
            ds.split_seed = seed;
            write_dataset(&ds, &run.path("dataset.synd"))?;
            println!("imported {} records ({n_s} nodes x {t} rounds)", ds.len());
        }
        Command::TrainDecoder { data } => {
            let ds = run.data(data)?;
            let outcome = train(&ds, &run.cfg.decoder(ds.t), seed)?;
            let test = evaluate(&outcome.model, &ds, &ds.split().test)?;
            checkpoint::save_decoder(&run.path("decoder.json"), &outcome.model, seed, Provenance::default())?;
            emit_curves(&outcome.curve, &run.path("curves.csv"))?;
            println!("test accuracy {:.4} (w_p {:.3})", test.accuracy, outcome.pos_weight);
            write_json(&TrainSummary { pos_weight: outcome.pos_weight, test }, &run.path("metrics.json"))?;
        }
        Command::TrainAdversary { data, decoder } => {
            let ds = run.data(data)?;
            let dec = run.decoder(decoder)?;
            let env = Environment::new(&dec, run.cfg.max_steps);
            let trained = reinforce_train(&env, &ds, &ds.split().train, &run.cfg.adversary(ds.t), seed)?;
            let prov = Provenance { source_checkpoint: Some(decoder.display().to_string()), actor: None };
            checkpoint::save_actor(&run.path("actor.json"), &trained.actor, seed, prov)?;
            let mut csv = String::from("episode,success,flips,total_reward\n");
            for e in &trained.episodes {
                csv += &format!("{},{},{},{}\n", e.episode, u8::from(e.success), e.flips, e.total_reward);
            }
            let path = run.path("episodes.csv");
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            let wins = trained.episodes.iter().filter(|e| e.success).count();
            println!("trained {} episodes, {wins} successful", trained.episodes.len());
        }
        Command::Attack { data, decoder, actor } => {
            let ds = run.data(data)?;
            let dec = run.decoder(decoder)?;
            let actor = run.actor(actor)?;
            let env = Environment::new(&dec, run.cfg.max_steps);
            let report = run.parallel(|| -> anyhow::Result<AttackReport> {
                let pool = pool_graphs(&env, &ds, &ds.split().test)?;
                Ok(attack_eval(&env, &actor, &pool)?)
            })??;
            write_json(&report, &run.path("attack.json"))?;
            emit_heatmap(&report, &run.path("heatmap.csv"), &run.path("heatmap.svg"))?;
            println!("ASR {:.4} over {} samples, avg flips {:?}", report.asr, report.pool_size, report.avg_flips);
        }
        Command::OracleAttack { data, decoder } => {
            let ds = run.data(data)?;
            let dec = run.decoder(decoder)?;
            let env = Environment::new(&dec, run.cfg.max_steps);
            let (k, budget) = (run.cfg.oracle_budget, run.cfg.subset_budget);
            let oracle = run.parallel(|| -> anyhow::Result<_> {
                let pool = pool_graphs(&env, &ds, &ds.split().test)?;
                Ok(brute_force_attack(&env, &pool, k, budget)?)
            })??;
            write_json(&oracle, &run.path("oracle.json"))?;
            emit_heatmap(&oracle.report, &run.path("oracle-heatmap.csv"), &run.path("oracle-heatmap.svg"))?;
            println!("oracle ASR {:.4} at k={k}, min-flip counts {:?}", oracle.report.asr, &oracle.min_flip_counts[1..]);
        }
        Command::Harden { data, decoder, actor } => {
            let ds = run.data(data)?;
            let dec = run.decoder(decoder)?;
            let actor_model = run.actor(actor)?;
            let split = ds.split();
            let adv = generate_adversarial(&actor_model, &dec, run.cfg.max_steps, &ds, &split.train)?;
            if adv.is_empty() {
                eprintln!("warning: the actor found no successful attacks; hardening reduces to clean training");
            }
            let outcome = robust_train(&dec, &ds, &adv, &run.cfg.robust(), seed)?;
            let before = evaluate(&dec, &ds, &split.test)?.accuracy;
            let test = evaluate(&outcome.model, &ds, &split.test)?;
            let prov = Provenance {
                source_checkpoint: Some(decoder.display().to_string()),
                actor: Some(actor.display().to_string()),
            };
            checkpoint::save_decoder(&run.path("decoder.json"), &outcome.model, seed, prov)?;
            emit_curves(&outcome.curve, &run.path("curves.csv"))?;
            let mut adv_ds = Dataset::new(ds.n_s, ds.t, ds.split_seed);
            for e in &adv.examples {
                adv_ds.push(SyndromeRecord { bits: e.graph.to_bits(), label: e.label })?;
            }
            write_dataset(&adv_ds, &run.path("adversarial.synd"))?;
            println!("{} adversarial examples; test accuracy {before:.4} -> {:.4}", adv.len(), test.accuracy);
            let summary =
                HardenSummary { adversarial_examples: adv.len(), accuracy_before: before, accuracy_after: test.accuracy, test };
            write_json(&summary, &run.path("metrics.json"))?;
        }
        Command::Bayes { data, decoder } => {
            let ds = run.data(data)?;
            let dec = decoder.as_deref().map(|p| run.decoder(p)).transpose()?;
            let noise = run.cfg.noise();
            if ds.t != noise.rounds || ds.n_s != noise.n_s() {
                bail!(ConfigError(format!(
                    "dataset is {}x{} but the noise model describes {}x{}",
                    ds.n_s,
                    ds.t,
                    noise.n_s(),
                    noise.rounds
                )));
            }
            let test = ds.split().test;
            let budget = run.cfg.enumeration_budget;
            let summary = run.parallel(|| -> anyhow::Result<BayesSummary> {
                let bayes_accuracy = match noise.mode {
                    NoiseMode::RepCode => BayesTable::build(&noise, budget)?.accuracy_on(test.iter().map(|&i| &ds.records[i])),
                    NoiseMode::Teacher => {
                        let teacher = Teacher::calibrated(&noise)?;
                        let hits = test
                            .iter()
                            .filter(|&&i| u8::from(teacher.posterior(&ds.records[i].bits) > 0.5) == ds.records[i].label)
                            .count();
                        hits as f64 / test.len().max(1) as f64
                    }
                };
                let decoder_accuracy = dec.as_ref().map(|m| evaluate(m, &ds, &test)).transpose()?.map(|m| m.accuracy);
                Ok(BayesSummary { test_records: test.len(), bayes_accuracy, decoder_accuracy })
            })??;
            println!("Bayes accuracy {:.4} on {} test records", summary.bayes_accuracy, summary.test_records);
            if let Some(acc) = summary.decoder_accuracy {
                println!("decoder accuracy {acc:.4} (gap {:.1} pp)", (summary.bayes_accuracy - acc) * 100.0);
            }
            write_json(&summary, &run.path("bayes.json"))?;
        }
        Command::Compare { before, after } => {
            run.manifest.input("before", before)?;
            run.manifest.input("after", after)?;
            let b: AttackReport = read_json(before)?;
            let a: AttackReport = read_json(after)?;
            let delta = compare_reports(&b, &a)?;
            write_json(&delta, &run.path("compare.json"))?;
            match delta.ratio {
                Some(r) => println!("ASR {:.4} -> {:.4} (ratio {r:.4})", delta.asr_before, delta.asr_after),
                None => println!("ASR {:.4} -> {:.4} (ratio undefined)", delta.asr_before, delta.asr_after),
            }
        }
    }
    run.manifest.write(&run.out)?;
    Ok(())
}
