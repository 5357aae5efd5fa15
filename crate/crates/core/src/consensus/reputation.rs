//! Reputation scoring.
//!
//! `R = (r1 + r2) / 2`. `r2` scores how much service a miner gives to
//! patients, `r1` scores its mining history. Both are gated by an honesty
//! flag: a miner caught misbehaving scores zero forever.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::MinerId;

/// Per-miner service counters over the chain, split into `l` chunks of `c`
/// keyblocks each.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkStats {
    /// Register transactions received per chunk.
    pub registers: Vec<u64>,
    /// Medical and label transactions received per chunk.
    pub records: Vec<u64>,
    pub chunk_size: u64,
    /// Chain length `L` in keyblocks.
    pub chain_length: u64,
    /// Total microblocks on chain (all miners).
    pub total_microblocks: u64,
    /// Total medical and label transactions on chain (all miners).
    pub total_records: u64,
}

impl ChunkStats {
    pub fn chunks(&self) -> usize {
        self.registers.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReputationParams {
    /// Midpoint of the scoring curve.
    pub a: f64,
    /// Width of the scoring curve.
    pub lambda: f64,
}

impl Default for ReputationParams {
    fn default() -> Self {
        Self {
            a: 5000.0,
            lambda: 20000.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReputationError {
    #[error("insufficient history")]
    InsufficientHistory,
    #[error("register and record chunk counts differ ({0} vs {1})")]
    MismatchedChunks(usize, usize),
    #[error("curve width must be positive, got {0}")]
    InvalidLambda(f64),
}

/// `½·(1 + (x − a) / (λ + |x − a|))`, increasing and bounded in (0, 1).
pub fn score_curve(x: f64, params: ReputationParams) -> f64 {
    let d = x - params.a;
    0.5 * (1.0 + d / (params.lambda + d.abs()))
}

fn rms_deviation(counts: &[u64], chunk_size: f64, mean: f64) -> f64 {
    let sum: f64 = counts
        .iter()
        .map(|&v| {
            let d = v as f64 / chunk_size - mean;
            d * d
        })
        .sum();
    (sum / counts.len() as f64).sqrt()
}

/// Service score. Zero for a dishonest miner.
pub fn compute_r2(stats: &ChunkStats, honest: bool, params: ReputationParams) -> Result<f64, ReputationError> {
    if stats.registers.len() != stats.records.len() {
        return Err(ReputationError::MismatchedChunks(
            stats.registers.len(),
            stats.records.len(),
        ));
    }
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(ReputationError::InvalidLambda(params.lambda));
    }
    if stats.chunks() == 0 || stats.total_microblocks == 0 || stats.total_records == 0 || stats.chunk_size == 0 {
        return Err(ReputationError::InsufficientHistory);
    }
    if !honest {
        return Ok(0.0);
    }
    let c = stats.chunk_size as f64;
    let mean_reg = stats.registers.iter().sum::<u64>() as f64 / stats.total_microblocks as f64;
    let mean_rec = stats.records.iter().sum::<u64>() as f64 / stats.total_records as f64;
    let q_reg = mean_reg / (1.0 + rms_deviation(&stats.registers, c, mean_reg));
    let q_rec = mean_rec / (1.0 + rms_deviation(&stats.records, c, mean_rec));
    let x = q_reg * q_rec * stats.chain_length as f64;
    Ok(score_curve(x, params).min(1.0))
}

/// Mining-history score. Pluggable so a richer formula can replace the
/// default share-of-pinned-keyblocks proxy.
pub trait MiningScore {
    fn r1(&self, miner: MinerId, honest: bool) -> f64;
}

/// `r1 = H · created / total` over pinned keyblocks.
pub fn compute_r1(created: u64, total_pinned: u64, honest: bool) -> f64 {
    if total_pinned == 0 || !honest {
        return 0.0;
    }
    (created as f64 / total_pinned as f64).clamp(0.0, 1.0)
}

/// Share of pinned keyblocks created by each miner.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PinnedShare {
    created: BTreeMap<MinerId, u64>,
    total: u64,
}

impl PinnedShare {
    pub fn record(&mut self, creator: MinerId) {
        *self.created.entry(creator).or_default() += 1;
        self.total += 1;
    }

    pub fn created_by(&self, miner: MinerId) -> u64 {
        self.created.get(&miner).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

impl MiningScore for PinnedShare {
    fn r1(&self, miner: MinerId, honest: bool) -> f64 {
        compute_r1(self.created_by(miner), self.total, honest)
    }
}

pub fn combine_reputation(r1: f64, r2: f64) -> f64 {
    (r1 + r2) / 2.0
}

/// Snapshot of one miner's reputation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReputationState {
    pub honest: bool,
    pub r1: f64,
    pub r2: f64,
}

impl ReputationState {
    pub fn combined(&self) -> f64 {
        combine_reputation(self.r1, self.r2)
    }
}
