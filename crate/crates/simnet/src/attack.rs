//! Adversary harnesses. Each takes a base scenario, switches on one
//! adversary and reports what it achieved.

use std::fmt;

use rayon::prelude::*;

use crate::config::{AdversaryKind, ScenarioConfig};
use crate::metrics::RunOutput;
use crate::sim::{run_scenario, SimError};

/// Light traffic so long runs stay cheap; the attacks are about keyblocks
/// and reputation, not volume.
fn quiet(cfg: ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        record_bytes: 64,
        ..cfg
    }
}

fn share_of(out: &RunOutput, miner: usize) -> f64 {
    let total: u64 = out.summary.miners.iter().map(|m| m.keyblock_reward).sum();
    if total == 0 {
        return 0.0;
    }
    out.summary.miners[miner].keyblock_reward as f64 / total as f64
}

// ---- selfish mining --------------------------------------------------------

pub fn selfish_default() -> ScenarioConfig {
    quiet(ScenarioConfig {
        miners: 4,
        group_size: 4,
        powers: vec![0.3, 0.7 / 3.0, 0.7 / 3.0, 0.7 / 3.0],
        rounds: 500,
        patients: 30,
        register_rate: 0.1,
        record_rate: 0.1,
        adversary_miner: 0,
        selfish_withhold: 2,
        ..ScenarioConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfishReport {
    pub seeds: u64,
    pub power: f64,
    /// Mean keyblock reward share of the withholding miner.
    pub adversary_share: f64,
    /// Mean share of the same miner when it mines honestly.
    pub baseline_share: f64,
    pub rejected_keyblocks: u64,
    pub pinned_conflicts: u64,
}

pub fn run_selfish(base: &ScenarioConfig, seeds: u64) -> Result<SelfishReport, SimError> {
    let a = base.adversary_miner;
    let runs: Vec<(RunOutput, RunOutput)> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let seed = base.seed + s;
            let attack = run_scenario(&ScenarioConfig {
                seed,
                adversary: AdversaryKind::Selfish,
                ..base.clone()
            })?;
            let honest = run_scenario(&ScenarioConfig {
                seed,
                adversary: AdversaryKind::None,
                ..base.clone()
            })?;
            Ok((attack, honest))
        })
        .collect::<Result<_, SimError>>()?;
    let n = seeds as f64;
    Ok(SelfishReport {
        seeds,
        power: base.power_shares()[a],
        adversary_share: runs.iter().map(|(x, _)| share_of(x, a)).sum::<f64>() / n,
        baseline_share: runs.iter().map(|(_, h)| share_of(h, a)).sum::<f64>() / n,
        rejected_keyblocks: runs.iter().map(|(x, _)| x.summary.rejected_keyblocks).sum(),
        pinned_conflicts: runs
            .iter()
            .map(|(x, h)| x.summary.pinned_conflicts + h.summary.pinned_conflicts)
            .sum(),
    })
}

impl fmt::Display for SelfishReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "selfish mining over {} seeds", self.seeds)?;
        writeln!(f, "  power share            {:.4}", self.power)?;
        writeln!(f, "  withholding reward     {:.4}", self.adversary_share)?;
        writeln!(f, "  honest baseline reward {:.4}", self.baseline_share)?;
        writeln!(f, "  rejected keyblocks     {}", self.rejected_keyblocks)?;
        writeln!(f, "  pinned conflicts       {}", self.pinned_conflicts)
    }
}

// ---- flash attack ----------------------------------------------------------

/// Eight equal incumbents serve patients from round 0; miner 7 arrives with
/// rented hash power. The scoring curve is scaled to desk-size service
/// counts so service history separates miners.
pub fn flash_default() -> ScenarioConfig {
    quiet(ScenarioConfig {
        miners: 8,
        group_size: 4,
        rounds: 200,
        patients: 80,
        register_rate: 0.3,
        record_rate: 0.6,
        rep_a: 0.5,
        rep_lambda: 0.1,
        adversary_miner: 7,
        flash_join_round: 100,
        flash_power: 0.9,
        ..ScenarioConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlashOutcome {
    pub first_round_in_group: Option<u64>,
    pub keyblocks: u64,
    pub honest: bool,
    pub final_reputation: f64,
    /// Lowest final reputation among the incumbents that end in the group.
    pub weakest_member_reputation: f64,
    /// Attacker reputation just before and just after misbehaving.
    pub reputation_around_misbehaviour: Option<(f64, f64)>,
    /// Whether the attacker sat in the group after misbehaving.
    pub in_group_after_misbehaviour: bool,
    pub pinned_conflicts: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlashReport {
    pub late_join: FlashOutcome,
    pub from_start: FlashOutcome,
    pub misbehaving: FlashOutcome,
}

fn flash_outcome(cfg: &ScenarioConfig) -> Result<FlashOutcome, SimError> {
    let out = run_scenario(cfg)?;
    let a = cfg.adversary_miner;
    let m = &out.summary.miners[a];
    let last_group = out.records.last().map(|r| r.group.clone()).unwrap_or_default();
    let weakest = out
        .summary
        .miners
        .iter()
        .filter(|x| x.miner as usize != a && last_group.contains(&x.miner))
        .map(|x| x.final_reputation)
        .fold(f64::INFINITY, f64::min);
    let r = cfg.flash_misbehave_round;
    let around = (r > 0).then(|| {
        let at = |round: u64| {
            out.reputation
                .iter()
                .find(|row| row.round == round && row.miner as usize == a)
                .map_or(0.0, |row| row.combined)
        };
        (at(r - 1), at(r))
    });
    Ok(FlashOutcome {
        first_round_in_group: m.first_round_in_group,
        keyblocks: m.keyblocks,
        honest: m.honest,
        final_reputation: m.final_reputation,
        weakest_member_reputation: weakest,
        reputation_around_misbehaviour: around,
        in_group_after_misbehaviour: r > 0 && out.records.iter().any(|x| x.round >= r && x.adversary_in_group),
        pinned_conflicts: out.summary.pinned_conflicts,
    })
}

/// Runs three variants: a mid-run joiner, the same miner present and
/// honest from round 0, and that miner misbehaving once halfway through.
pub fn run_flash(base: &ScenarioConfig) -> Result<FlashReport, SimError> {
    let late = ScenarioConfig {
        adversary: AdversaryKind::Flash,
        ..base.clone()
    };
    let early = ScenarioConfig {
        flash_join_round: 0,
        ..late.clone()
    };
    let misbehave = ScenarioConfig {
        flash_misbehave_round: (base.rounds / 2).max(2),
        ..early.clone()
    };
    let runs: Vec<FlashOutcome> = [late, early, misbehave]
        .par_iter()
        .map(flash_outcome)
        .collect::<Result<_, _>>()?;
    let mut it = runs.into_iter();
    Ok(FlashReport {
        late_join: it.next().expect("three runs"),
        from_start: it.next().expect("three runs"),
        misbehaving: it.next().expect("three runs"),
    })
}

impl fmt::Display for FlashOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let first = self
            .first_round_in_group
            .map_or_else(|| "never".into(), |r| r.to_string());
        write!(
            f,
            "first in group: {first}, keyblocks {}, honest {}, R {:.4} (weakest member {:.4})",
            self.keyblocks, self.honest, self.final_reputation, self.weakest_member_reputation
        )?;
        if let Some((before, after)) = self.reputation_around_misbehaviour {
            write!(
                f,
                ", R {before:.4} -> {after:.4}, in group afterwards {}",
                self.in_group_after_misbehaviour
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for FlashReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "flash attack")?;
        writeln!(f, "  joins mid-run       {}", self.late_join)?;
        writeln!(f, "  present from start  {}", self.from_start)?;
        writeln!(f, "  misbehaves once     {}", self.misbehaving)
    }
}

// ---- fraud -----------------------------------------------------------------

pub fn fraud_default() -> ScenarioConfig {
    quiet(ScenarioConfig {
        miners: 4,
        group_size: 4,
        rounds: 60,
        patients: 40,
        register_rate: 0.3,
        record_rate: 0.5,
        rep_a: 0.5,
        rep_lambda: 0.5,
        adversary_miner: 0,
        fraud_zombie_records: 5,
        ..ScenarioConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FraudPoint {
    pub zombies: usize,
    /// Register and record fees paid for zombies, in micro-units.
    pub fees_paid: u64,
    pub r2: f64,
    pub reputation: f64,
}

/// One run per zombie count; the cost curve is fees paid against the
/// fraudulent institution's final service score.
pub fn run_fraud(base: &ScenarioConfig, zombie_counts: &[usize]) -> Result<Vec<FraudPoint>, SimError> {
    zombie_counts
        .par_iter()
        .map(|&zombies| {
            let cfg = ScenarioConfig {
                adversary: AdversaryKind::Fraud,
                fraud_zombies: zombies,
                ..base.clone()
            };
            let out = run_scenario(&cfg)?;
            let a = cfg.adversary_miner as u32;
            let last = out
                .reputation
                .iter()
                .rev()
                .find(|r| r.miner == a)
                .cloned()
                .unwrap_or_default();
            Ok(FraudPoint {
                zombies,
                fees_paid: out.summary.fees_paid_by_zombies,
                r2: last.r2,
                reputation: last.combined,
            })
        })
        .collect()
}

pub fn fraud_csv(points: &[FraudPoint]) -> String {
    let mut s = format!("{}\nzombies,fees_paid,r2,R\n", crate::metrics::CSV_HEADER);
    for p in points {
        s.push_str(&format!(
            "{},{},{:.9},{:.9}\n",
            p.zombies, p.fees_paid, p.r2, p.reputation
        ));
    }
    s
}

// ---- inhibition ------------------------------------------------------------

/// Four institutions, all in the group. Miner 0 refuses to sign records
/// received by anyone else. It does no mining, so its weight comes only
/// from the service it gives and stays below a third of the group.
pub fn inhibition_default() -> ScenarioConfig {
    quiet(ScenarioConfig {
        miners: 4,
        group_size: 4,
        powers: vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        rounds: 80,
        patients: 40,
        register_rate: 0.3,
        record_rate: 0.6,
        adversary_miner: 0,
        ..ScenarioConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InhibitionOutcome {
    /// Largest share of group weight the inhibitor held in any round.
    pub max_weight_share: f64,
    pub max_victim_latency_rounds: u64,
    pub stalled_batches: u64,
    pub stalled_txs: u64,
    pub starved_batches: u64,
    pub pinned_records: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InhibitionReport {
    pub light: InhibitionOutcome,
    pub heavy: InhibitionOutcome,
}

fn max_weight_share(out: &RunOutput, miner: u32) -> f64 {
    let mut worst: f64 = 0.0;
    for rec in &out.records {
        if !rec.group.contains(&miner) {
            continue;
        }
        let weight = |id: u32| {
            out.reputation
                .iter()
                .find(|r| r.round == rec.round && r.miner == id)
                .map_or(0.0, |r| r.combined)
        };
        let total: f64 = rec.group.iter().map(|&id| weight(id)).sum();
        let share = if total > 0.0 {
            weight(miner) / total
        } else {
            1.0 / rec.group.len() as f64
        };
        worst = worst.max(share);
    }
    worst
}

fn inhibition_outcome(cfg: &ScenarioConfig) -> Result<InhibitionOutcome, SimError> {
    let out = run_scenario(cfg)?;
    let s = &out.summary;
    Ok(InhibitionOutcome {
        max_weight_share: max_weight_share(&out, cfg.adversary_miner as u32),
        max_victim_latency_rounds: s.max_victim_latency_rounds,
        stalled_batches: s.stalled_batches,
        stalled_txs: s.stalled_txs,
        starved_batches: s.starved_batches,
        pinned_records: s.pinned_records,
    })
}

/// Runs the base scenario, then a variant where the inhibitor holds most of
/// the hash power and so a large share of the group weight.
pub fn run_inhibition(base: &ScenarioConfig) -> Result<InhibitionReport, SimError> {
    let light = ScenarioConfig {
        adversary: AdversaryKind::Inhibition,
        ..base.clone()
    };
    let a = base.adversary_miner;
    let others = (1.0 - 0.7) / (base.miners - 1) as f64;
    let heavy = ScenarioConfig {
        powers: (0..base.miners).map(|i| if i == a { 0.7 } else { others }).collect(),
        ..light.clone()
    };
    let (light, heavy) = rayon::join(|| inhibition_outcome(&light), || inhibition_outcome(&heavy));
    Ok(InhibitionReport {
        light: light?,
        heavy: heavy?,
    })
}

impl fmt::Display for InhibitionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max weight {:.4}, victim latency {} rounds, stalled batches {} ({} txs), starved batches {}, pinned records {}",
            self.max_weight_share,
            self.max_victim_latency_rounds,
            self.stalled_batches,
            self.stalled_txs,
            self.starved_batches,
            self.pinned_records
        )
    }
}

impl fmt::Display for InhibitionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "inhibition")?;
        writeln!(f, "  low weight   {}", self.light)?;
        writeln!(f, "  high weight  {}", self.heavy)?;
        if self.heavy.stalled_batches > 0 {
            writeln!(
                f,
                "  flagged: records stall once the inhibitor holds over a third of the weight"
            )?;
        }
        Ok(())
    }
}
