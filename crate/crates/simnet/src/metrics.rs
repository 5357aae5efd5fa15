//! Run metrics and their CSV rendering.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const CSV_HEADER: &str = "# spchain-metrics v1";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub round: u64,
    pub step: u64,
    pub keyblock_tps: f64,
    pub microblock_tps: f64,
    pub pinned_registers: u64,
    pub pinned_records: u64,
    pub pinned_conflicts: u64,
    pub stalled_batches: u64,
    pub adversary_in_group: bool,
    pub group: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReputationRow {
    pub round: u64,
    pub miner: u32,
    pub r1: f64,
    pub r2: f64,
    pub combined: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinerSummary {
    pub miner: u32,
    pub power: f64,
    pub honest: bool,
    pub keyblocks: u64,
    /// Mining reward plus register fees, in micro-units.
    pub keyblock_reward: u64,
    /// All rewards, in micro-units.
    pub total_reward: u64,
    pub final_reputation: f64,
    pub rounds_in_group: u64,
    pub first_round_in_group: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub rounds: u64,
    pub steps: u64,
    pub seconds: f64,
    pub keyblock_tps: f64,
    pub microblock_tps: f64,
    pub pinned_registers: u64,
    pub pinned_records: u64,
    pub pinned_conflicts: u64,
    pub stalled_batches: u64,
    pub stalled_txs: u64,
    pub starved_batches: u64,
    pub rejected_keyblocks: u64,
    pub histories_complete: bool,
    /// Hex digest of the pinned keyblocks and microblock contents.
    pub ledger_digest: String,
    /// Worst keyblock-round delay between a record reaching its institution
    /// and its pinning, over records not received by the adversary.
    pub max_victim_latency_rounds: u64,
    pub fees_paid_by_zombies: u64,
    pub miners: Vec<MinerSummary>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub reputation: Vec<ReputationRow>,
    pub summary: RunSummary,
}

fn join(ids: &[u32]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

impl RunOutput {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        writeln!(
            s,
            "round,step,keyblock_tps,microblock_tps,pinned_registers,pinned_records,pinned_conflicts,stalled_batches,adversary_in_group,group"
        )
        .unwrap();
        for r in &self.records {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{},{},{},{},{},{}",
                r.round,
                r.step,
                r.keyblock_tps,
                r.microblock_tps,
                r.pinned_registers,
                r.pinned_records,
                r.pinned_conflicts,
                r.stalled_batches,
                u8::from(r.adversary_in_group),
                join(&r.group)
            )
            .unwrap();
        }
        s
    }

    pub fn reputation_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        writeln!(s, "round,miner,r1,r2,R").unwrap();
        for r in &self.reputation {
            writeln!(s, "{},{},{:.9},{:.9},{:.9}", r.round, r.miner, r.r1, r.r2, r.combined).unwrap();
        }
        s
    }

    pub fn miners_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        writeln!(
            s,
            "miner,power,honest,keyblocks,keyblock_reward,total_reward,final_R,rounds_in_group,first_round_in_group"
        )
        .unwrap();
        for m in &self.summary.miners {
            writeln!(
                s,
                "{},{:.6},{},{},{},{},{:.9},{},{}",
                m.miner,
                m.power,
                u8::from(m.honest),
                m.keyblocks,
                m.keyblock_reward,
                m.total_reward,
                m.final_reputation,
                m.rounds_in_group,
                m.first_round_in_group
                    .map_or_else(|| "-".to_string(), |r| r.to_string())
            )
            .unwrap();
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let m = &self.summary;
        let mut s = String::new();
        writeln!(s, "rounds                 {}", m.rounds).unwrap();
        writeln!(s, "steps                  {}", m.steps).unwrap();
        writeln!(s, "simulated seconds      {:.3}", m.seconds).unwrap();
        writeln!(s, "keyblock tps           {:.6}", m.keyblock_tps).unwrap();
        writeln!(s, "microblock tps         {:.6}", m.microblock_tps).unwrap();
        writeln!(s, "pinned registers       {}", m.pinned_registers).unwrap();
        writeln!(s, "pinned records         {}", m.pinned_records).unwrap();
        writeln!(s, "pinned conflicts       {}", m.pinned_conflicts).unwrap();
        writeln!(s, "rejected keyblocks     {}", m.rejected_keyblocks).unwrap();
        writeln!(s, "stalled batches        {}", m.stalled_batches).unwrap();
        writeln!(s, "stalled transactions   {}", m.stalled_txs).unwrap();
        writeln!(s, "starved batches        {}", m.starved_batches).unwrap();
        writeln!(s, "max victim latency     {} rounds", m.max_victim_latency_rounds).unwrap();
        writeln!(s, "histories complete     {}", m.histories_complete).unwrap();
        writeln!(s, "ledger digest          {}", m.ledger_digest).unwrap();
        if m.fees_paid_by_zombies > 0 {
            writeln!(s, "zombie fees paid       {}", m.fees_paid_by_zombies).unwrap();
        }
        s
    }

    /// Writes `metrics.csv`, `reputation.csv`, `miners.csv` and `summary.txt`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("reputation.csv"), self.reputation_csv())?;
        fs::write(dir.join("miners.csv"), self.miners_csv())?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        Ok(())
    }
}
