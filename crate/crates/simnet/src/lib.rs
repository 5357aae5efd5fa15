//! Deterministic simulator for the ledger: scenario runs, throughput
//! benchmarks and adversary harnesses.

pub mod attack;
pub mod bench;
pub mod config;
pub mod desk;
pub mod events;
pub mod metrics;
pub mod sim;

pub use config::{AdversaryKind, ConfigError, ScenarioConfig};
pub use metrics::{MetricsRecord, MinerSummary, ReputationRow, RunOutput, RunSummary, CSV_HEADER};
pub use sim::{run_scenario, SimError, Simulation};
