//! Throughput matrix over block sizes and consensus group sizes.
//!
//! Block sizes are given in megabytes and scaled down by 1024 so a cell runs
//! in seconds: "1 MB" holds the same number of transactions as a 1 KiB
//! block here. Both queues are kept saturated so measured throughput is the
//! protocol's capacity rather than the offered load.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::metrics::CSV_HEADER;
use crate::sim::{record_tx_size, register_tx_size, run_scenario, SimError};

pub const BYTES_PER_MB: usize = 1024;

/// Miners in every cell, enough for the largest group.
pub const BENCH_MINERS: usize = 28;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchCell {
    pub block_mb: u32,
    pub group_size: usize,
    pub keyblock_tps: f64,
    pub microblock_tps: f64,
}

fn batch_steps(cfg: &ScenarioConfig, cap: usize, group_size: usize) -> u64 {
    let k = (2 * group_size).div_ceil(3) as u64;
    cfg.batch_latency + (cap as u64 * k).div_ceil(cfg.verify_rate)
}

/// Scenario for one matrix cell. Arrival rates are set to 1.5 times the
/// capacity of the smallest group so every cell is saturated.
pub fn bench_config(block_mb: u32, group_size: usize, seed: u64, rounds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        seed,
        miners: BENCH_MINERS,
        group_size,
        block_size_bytes: block_mb as usize * BYTES_PER_MB,
        batch_cap: 0,
        rounds,
        record_bytes: 128,
        delta: 1,
        label_fraction: 0.0,
        ..ScenarioConfig::default()
    };
    let round_steps = (cfg.target_bits as f64).exp2() / cfg.hashrate + cfg.keyblock_latency as f64;
    let registers_per_block = cfg.block_size_bytes / register_tx_size();
    cfg.register_rate = 1.5 * registers_per_block as f64 / round_steps;
    cfg.patients = (cfg.register_rate * round_steps * rounds as f64) as usize + 1;
    let cap = (cfg.block_size_bytes / record_tx_size(cfg.record_bytes)).max(1);
    cfg.record_rate = 1.5 * cap as f64 / batch_steps(&cfg, cap, 4) as f64;
    cfg
}

/// Runs every `(block size, group size)` cell in parallel. Rows come back
/// ordered by block size, then group size.
pub fn bench_throughput(
    block_sizes_mb: &[u32],
    group_sizes: &[usize],
    seed: u64,
    rounds: u64,
) -> Result<Vec<BenchCell>, SimError> {
    let cells: Vec<(u32, usize)> = block_sizes_mb
        .iter()
        .flat_map(|&b| group_sizes.iter().map(move |&g| (b, g)))
        .collect();
    cells
        .par_iter()
        .map(|&(block_mb, group_size)| {
            let out = run_scenario(&bench_config(block_mb, group_size, seed, rounds))?;
            Ok(BenchCell {
                block_mb,
                group_size,
                keyblock_tps: out.summary.keyblock_tps,
                microblock_tps: out.summary.microblock_tps,
            })
        })
        .collect()
}

pub fn bench_csv(cells: &[BenchCell]) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    writeln!(s, "block_mb,group_size,keyblock_tps,microblock_tps").unwrap();
    for c in cells {
        writeln!(
            s,
            "{},{},{:.6},{:.6}",
            c.block_mb, c.group_size, c.keyblock_tps, c.microblock_tps
        )
        .unwrap();
    }
    s
}
