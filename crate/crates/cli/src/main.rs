use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use spchain_sim::attack::{
    flash_default, fraud_csv, fraud_default, inhibition_default, run_flash, run_fraud, run_inhibition, run_selfish,
    selfish_default,
};
use spchain_sim::bench::{bench_csv, bench_throughput};
use spchain_sim::{run_scenario, ConfigError, ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "spchain", version, about = "Medical-record ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, reputation.csv, miners.csv and summary.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Throughput over a matrix of block sizes (MB) and group sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        block_sizes: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,28")]
        group_sizes: Vec<usize>,
        #[arg(long, default_value_t = 60)]
        rounds: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an adversary harness and print its report.
    Attack {
        #[arg(long = "type", value_enum)]
        kind: AttackKind,
        /// Base scenario; the harness default is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds for the selfish-mining harness.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    Selfish,
    Flash,
    Fraud,
    Inhibition,
}

enum Failure {
    Config(anyhow::Error),
    Invariant(anyhow::Error),
    Other(anyhow::Error),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Config(e.into()),
            SimError::Invariant { .. } | SimError::Stalled { .. } => Failure::Invariant(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    ScenarioConfig::parse(&text)
        .map_err(|e: ConfigError| Failure::Config(anyhow::Error::new(e).context(path.display().to_string())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = run_scenario(&cfg)?;
            output.write_dir(&out)?;
            print!("{}", output.summary_text());
        }
        Command::Bench {
            block_sizes,
            group_sizes,
            rounds,
            seed,
            out,
        } => {
            if block_sizes.is_empty() || group_sizes.is_empty() {
                return Err(Failure::Config(anyhow::anyhow!("the matrix needs at least one cell")));
            }
            let cells = bench_throughput(&block_sizes, &group_sizes, seed, rounds)?;
            let csv = bench_csv(&cells);
            fs::create_dir_all(&out)?;
            fs::write(out.join("bench.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Attack { kind, config, seeds } => {
            let base = |default: fn() -> ScenarioConfig| match &config {
                Some(path) => load_config(path),
                None => Ok(default()),
            };
            match kind {
                AttackKind::Selfish => print!("{}", run_selfish(&base(selfish_default)?, seeds)?),
                AttackKind::Flash => print!("{}", run_flash(&base(flash_default)?)?),
                AttackKind::Fraud => print!("{}", fraud_csv(&run_fraud(&base(fraud_default)?, &[0, 1, 2, 4, 8])?)),
                AttackKind::Inhibition => print!("{}", run_inhibition(&base(inhibition_default)?)?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(e)) => {
            eprintln!("invariant violation: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
