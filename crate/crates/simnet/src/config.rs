//! Scenario configuration.
//!
//! The file format is flat `key = value` text. Blank lines and anything
//! after `#` are ignored. Lists are comma separated. Unknown keys are an
//! error so typos do not silently fall back to defaults.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    None,
    Selfish,
    Flash,
    Fraud,
    Inhibition,
}

impl FromStr for AdversaryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => AdversaryKind::None,
            "selfish" => AdversaryKind::Selfish,
            "flash" => AdversaryKind::Flash,
            "fraud" => AdversaryKind::Fraud,
            "inhibition" => AdversaryKind::Inhibition,
            other => return Err(format!("unknown adversary `{other}`")),
        })
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryKind::None => "none",
            AdversaryKind::Selfish => "selfish",
            AdversaryKind::Flash => "flash",
            AdversaryKind::Fraud => "fraud",
            AdversaryKind::Inhibition => "inhibition",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub miners: usize,
    /// Hash power share per miner; empty means equal shares.
    pub powers: Vec<f64>,
    pub group_size: usize,
    pub block_size_bytes: usize,
    pub target_bits: u32,
    /// Total hash attempts per simulated step across all miners.
    pub hashrate: f64,
    pub rounds: u64,
    pub patients: usize,
    /// Expected registrations arriving per step.
    pub register_rate: f64,
    /// Expected medical records arriving per step.
    pub record_rate: f64,
    pub label_fraction: f64,
    /// Chance that a record comes from an institution other than the
    /// patient's home institution.
    pub visit_other_fraction: f64,
    pub record_bytes: usize,
    pub rep_a: f64,
    pub rep_lambda: f64,
    pub chunk_size: u64,
    /// Steps between scheduler batches.
    pub delta: u64,
    /// Transactions per batch; 0 derives it from the block size.
    pub batch_cap: usize,
    /// Signature checks the group completes per step.
    pub verify_rate: u64,
    pub batch_latency: u64,
    pub keyblock_latency: u64,
    pub net_delay_min: u64,
    pub net_delay_max: u64,
    pub steps_per_second: u64,
    pub register_fee: u64,
    pub record_fee: u64,
    pub mining_reward: u64,
    pub microblock_reward: u64,
    pub creator_share_percent: u64,
    /// Randomise the processing order of same-step events.
    pub shuffle_ties: bool,
    pub adversary: AdversaryKind,
    pub adversary_miner: usize,
    pub selfish_withhold: u64,
    pub flash_join_round: u64,
    pub flash_power: f64,
    /// Round at which the flash miner publishes a conflicting keyblock; 0 = never.
    pub flash_misbehave_round: u64,
    pub fraud_zombies: usize,
    pub fraud_zombie_records: usize,
    /// Hard stop on simulated steps, guarding against stalled runs.
    pub max_steps: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            miners: 4,
            powers: Vec::new(),
            group_size: 4,
            block_size_bytes: 8192,
            target_bits: 8,
            hashrate: 32.0,
            rounds: 30,
            patients: 40,
            register_rate: 0.2,
            record_rate: 0.5,
            label_fraction: 0.05,
            visit_other_fraction: 0.2,
            record_bytes: 2048,
            rep_a: 5000.0,
            rep_lambda: 20000.0,
            chunk_size: 10,
            delta: 5,
            batch_cap: 12,
            verify_rate: 8,
            batch_latency: 2,
            keyblock_latency: 3,
            net_delay_min: 1,
            net_delay_max: 3,
            steps_per_second: 10,
            register_fee: 2,
            record_fee: 1,
            mining_reward: 50,
            microblock_reward: 10,
            creator_share_percent: 50,
            shuffle_ties: false,
            adversary: AdversaryKind::None,
            adversary_miner: 0,
            selfish_withhold: 2,
            flash_join_round: 100,
            flash_power: 0.9,
            flash_misbehave_round: 0,
            fraud_zombies: 0,
            fraud_zombie_records: 5,
            max_steps: 10_000_000,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        }),
    }
}

impl ScenarioConfig {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ScenarioConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            c.set(line, key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        macro_rules! num {
            ($field:ident) => {
                self.$field = parse_value(line, key, v)?
            };
        }
        match key {
            "seed" => num!(seed),
            "miners" => num!(miners),
            "powers" => {
                self.powers = v
                    .split(',')
                    .map(|p| parse_value(line, key, p.trim()))
                    .collect::<Result<_, _>>()?
            }
            "group_size" => num!(group_size),
            "block_size_bytes" => num!(block_size_bytes),
            "target_bits" => num!(target_bits),
            "hashrate" => num!(hashrate),
            "rounds" => num!(rounds),
            "patients" => num!(patients),
            "register_rate" => num!(register_rate),
            "record_rate" => num!(record_rate),
            "label_fraction" => num!(label_fraction),
            "visit_other_fraction" => num!(visit_other_fraction),
            "record_bytes" => num!(record_bytes),
            "rep_a" => num!(rep_a),
            "rep_lambda" => num!(rep_lambda),
            "chunk_size" => num!(chunk_size),
            "delta" => num!(delta),
            "batch_cap" => num!(batch_cap),
            "verify_rate" => num!(verify_rate),
            "batch_latency" => num!(batch_latency),
            "keyblock_latency" => num!(keyblock_latency),
            "net_delay_min" => num!(net_delay_min),
            "net_delay_max" => num!(net_delay_max),
            "steps_per_second" => num!(steps_per_second),
            "register_fee" => num!(register_fee),
            "record_fee" => num!(record_fee),
            "mining_reward" => num!(mining_reward),
            "microblock_reward" => num!(microblock_reward),
            "creator_share_percent" => num!(creator_share_percent),
            "shuffle_ties" => self.shuffle_ties = parse_bool(line, key, v)?,
            "adversary" => num!(adversary),
            "adversary_miner" => num!(adversary_miner),
            "selfish_withhold" => num!(selfish_withhold),
            "flash_join_round" => num!(flash_join_round),
            "flash_power" => num!(flash_power),
            "flash_misbehave_round" => num!(flash_misbehave_round),
            "fraud_zombies" => num!(fraud_zombies),
            "fraud_zombie_records" => num!(fraud_zombie_records),
            "max_steps" => num!(max_steps),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Power shares, expanding the empty default to equal shares.
    pub fn power_shares(&self) -> Vec<f64> {
        if self.powers.is_empty() {
            vec![1.0 / self.miners as f64; self.miners]
        } else {
            self.powers.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.miners == 0 || self.rounds == 0 || self.steps_per_second == 0 || self.verify_rate == 0 {
            return bad("miners, rounds, steps_per_second and verify_rate must be positive".into());
        }
        if self.group_size == 0 || self.group_size > self.miners {
            return bad(format!("group_size must be in 1..={}", self.miners));
        }
        if !self.powers.is_empty() && self.powers.len() != self.miners {
            return bad(format!("{} powers given for {} miners", self.powers.len(), self.miners));
        }
        let shares = self.power_shares();
        if shares.iter().any(|p| p.is_nan() || *p < 0.0) {
            return bad("powers must be non-negative".into());
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("powers sum to {sum}, expected 1"));
        }
        if self.target_bits > 32 {
            return bad("target_bits must be in 0..=32".into());
        }
        if self.hashrate.is_nan() || self.hashrate <= 0.0 {
            return bad("hashrate must be positive".into());
        }
        if self.rep_lambda.is_nan() || self.rep_lambda <= 0.0 || self.chunk_size == 0 {
            return bad("rep_lambda and chunk_size must be positive".into());
        }
        if self.delta == 0 {
            return bad("delta must be positive".into());
        }
        if self.net_delay_min > self.net_delay_max {
            return bad("net_delay_min exceeds net_delay_max".into());
        }
        for (name, p) in [
            ("label_fraction", self.label_fraction),
            ("visit_other_fraction", self.visit_other_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        if self.register_rate < 0.0 || self.record_rate < 0.0 {
            return bad("arrival rates must be non-negative".into());
        }
        if self.creator_share_percent > 100 {
            return bad("creator_share_percent must be at most 100".into());
        }
        if self.adversary != AdversaryKind::None && self.adversary_miner >= self.miners {
            return bad("adversary_miner out of range".into());
        }
        if self.adversary == AdversaryKind::Flash {
            if !(0.0..1.0).contains(&self.flash_power) {
                return bad("flash_power must be in [0, 1)".into());
            }
            if self.miners - 1 < self.group_size {
                return bad("flash scenario needs at least group_size incumbents".into());
            }
        }
        Ok(())
    }

    /// Renders the config back to the key/value format.
    pub fn to_text(&self) -> String {
        let powers = self
            .power_shares()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("seed", self.seed.to_string());
        kv("miners", self.miners.to_string());
        kv("powers", powers);
        kv("group_size", self.group_size.to_string());
        kv("block_size_bytes", self.block_size_bytes.to_string());
        kv("target_bits", self.target_bits.to_string());
        kv("hashrate", self.hashrate.to_string());
        kv("rounds", self.rounds.to_string());
        kv("patients", self.patients.to_string());
        kv("register_rate", self.register_rate.to_string());
        kv("record_rate", self.record_rate.to_string());
        kv("label_fraction", self.label_fraction.to_string());
        kv("visit_other_fraction", self.visit_other_fraction.to_string());
        kv("record_bytes", self.record_bytes.to_string());
        kv("rep_a", self.rep_a.to_string());
        kv("rep_lambda", self.rep_lambda.to_string());
        kv("chunk_size", self.chunk_size.to_string());
        kv("delta", self.delta.to_string());
        kv("batch_cap", self.batch_cap.to_string());
        kv("verify_rate", self.verify_rate.to_string());
        kv("batch_latency", self.batch_latency.to_string());
        kv("keyblock_latency", self.keyblock_latency.to_string());
        kv("net_delay_min", self.net_delay_min.to_string());
        kv("net_delay_max", self.net_delay_max.to_string());
        kv("steps_per_second", self.steps_per_second.to_string());
        kv("register_fee", self.register_fee.to_string());
        kv("record_fee", self.record_fee.to_string());
        kv("mining_reward", self.mining_reward.to_string());
        kv("microblock_reward", self.microblock_reward.to_string());
        kv("creator_share_percent", self.creator_share_percent.to_string());
        kv("shuffle_ties", self.shuffle_ties.to_string());
        kv("adversary", self.adversary.to_string());
        kv("adversary_miner", self.adversary_miner.to_string());
        kv("selfish_withhold", self.selfish_withhold.to_string());
        kv("flash_join_round", self.flash_join_round.to_string());
        kv("flash_power", self.flash_power.to_string());
        kv("flash_misbehave_round", self.flash_misbehave_round.to_string());
        kv("fraud_zombies", self.fraud_zombies.to_string());
        kv("fraud_zombie_records", self.fraud_zombie_records.to_string());
        kv("max_steps", self.max_steps.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_ignores_comments() {
        let c = ScenarioConfig::parse("# demo\nseed = 9\nminers=5 # five\npowers = 0.2,0.2,0.2,0.2,0.2\n\nadversary = flash\nadversary_miner = 4\n")
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.miners, 5);
        assert_eq!(c.adversary, AdversaryKind::Flash);
    }

    #[test]
    fn round_trips_through_text() {
        let c = ScenarioConfig {
            seed: 77,
            powers: vec![0.1, 0.2, 0.3, 0.4],
            ..ScenarioConfig::default()
        };
        assert_eq!(ScenarioConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(
            ScenarioConfig::parse("seed = 1\nbogus = 2").unwrap_err(),
            ConfigError::UnknownKey {
                line: 2,
                key: "bogus".into()
            }
        );
        assert_eq!(
            ScenarioConfig::parse("seed 1").unwrap_err(),
            ConfigError::Syntax { line: 1 }
        );
        assert!(matches!(
            ScenarioConfig::parse("rounds = -3").unwrap_err(),
            ConfigError::BadValue { line: 1, .. }
        ));
        assert!(matches!(
            ScenarioConfig::parse("powers = 0.5,0.5,0.5,0.5").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(
            ScenarioConfig::parse("group_size = 9").unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }
}
