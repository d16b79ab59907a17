//! `advqec`: generate syndrome data, train the GATv2 decoder, attack it with
//! a REINFORCE adversary, harden it, and compare the before/after reports.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides};

#[derive(Parser)]
#[command(name = "advqec", version, about)]
struct Cli {
    /// TOML file with run settings; keys match the long flag names
    #[arg(long, global = true, env = "ADVQEC_CONFIG")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled syndrome dataset
    GenData,
    /// Convert detection events and observable flips in the `01` text format
    #[command(name = "import-01")]
    Import01 {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// Detector nodes per round; inferred from the line width by default
        #[arg(long)]
        nodes: Option<usize>,
        /// Comma-separated target bit for each column of the dets file
        #[arg(long, value_delimiter = ',')]
        detector_order: Option<Vec<usize>>,
    },
    /// Train the decoder on a dataset's train split
    TrainDecoder {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the adversary against a frozen decoder
    TrainAdversary {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
    },
    /// Greedy attack of every correctly-negative test sample
    Attack {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long)]
        actor: PathBuf,
    },
    /// Exhaustive minimum-flip attack up to `--oracle-budget` flips
    OracleAttack {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
    },
    /// Retrain the decoder on the adversary's successful attacks
    Harden {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long)]
        actor: PathBuf,
    },
    /// Exact Bayes-optimal accuracy on the test split
    Bayes {
        #[arg(long)]
        data: PathBuf,
        /// Also score this decoder on the same split
        #[arg(long)]
        decoder: Option<PathBuf>,
    },
    /// Summarize two attack reports
    Compare {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Import01 { .. } => "import-01",
            Command::TrainDecoder { .. } => "train-decoder",
            Command::TrainAdversary { .. } => "train-adversary",
            Command::Attack { .. } => "attack",
            Command::OracleAttack { .. } => "oracle-attack",
            Command::Harden { .. } => "harden",
            Command::Bayes { .. } => "bayes",
            Command::Compare { .. } => "compare",
        }
    }
}

/// Short tag for the first recognizable error in the chain.
fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<advqec_core::Error>() {
            return e.kind();
        }
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", error_kind(&err));
            ExitCode::FAILURE
        }
    }
}
