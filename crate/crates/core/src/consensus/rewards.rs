//! Reward distribution in integer micro-units, so every split conserves the
//! distributed total exactly.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ledger::{KeyBlock, MicroBlock, PinCertificate};
use crate::MinerId;

pub type Amount = u64;

/// Micro-units per whole coin.
pub const UNIT: Amount = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeeSchedule {
    pub mining_reward: Amount,
    pub microblock_reward: Amount,
    /// Percent of a microblock reward or transaction fee kept by its creator.
    pub creator_share_percent: u64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            mining_reward: 50 * UNIT,
            microblock_reward: 10 * UNIT,
            creator_share_percent: 50,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("block is not pinned")]
    Unpinned,
}

pub type Payouts = BTreeMap<MinerId, Amount>;

fn credit(out: &mut Payouts, who: MinerId, amount: Amount) {
    if amount > 0 {
        *out.entry(who).or_default() += amount;
    }
}

/// Splits `total` between `creator` and the certificate signers.
///
/// The creator keeps its share; the rest goes to signers in proportion to
/// their weight. Rounding dust goes to the creator.
pub fn split_reward(out: &mut Payouts, total: Amount, creator: MinerId, cert: &PinCertificate, creator_percent: u64) {
    let creator_part = total * creator_percent.min(100) / 100;
    let pool = total - creator_part;
    let weight = cert.signer_weight();
    let mut paid = 0;
    if weight > 0.0 {
        for s in &cert.signers {
            let share = ((pool as f64) * (s.weight / weight)).floor() as Amount;
            let share = share.min(pool - paid);
            credit(out, s.signer, share);
            paid += share;
        }
    }
    credit(out, creator, total - paid);
}

/// Keyblock creator gets the mining reward plus all register fees.
pub fn keyblock_rewards(block: &KeyBlock, schedule: &FeeSchedule) -> Result<Payouts, RewardError> {
    if block.pin_cert.is_none() {
        return Err(RewardError::Unpinned);
    }
    let fees: Amount = block.register_txs.iter().map(|t| t.fee).sum();
    let mut out = Payouts::new();
    credit(&mut out, block.miner, schedule.mining_reward + fees);
    Ok(out)
}

/// Creation reward plus every appended transaction's fee, each split
/// between the microblock creator and the signers that pinned it.
pub fn microblock_rewards(block: &MicroBlock, schedule: &FeeSchedule) -> Result<Payouts, RewardError> {
    let cert = block.creation_cert.as_ref().ok_or(RewardError::Unpinned)?;
    let mut out = Payouts::new();
    split_reward(
        &mut out,
        schedule.microblock_reward,
        block.creator,
        cert,
        schedule.creator_share_percent,
    );
    for e in block.entries() {
        split_reward(
            &mut out,
            e.tx.fee,
            block.creator,
            &e.cert,
            schedule.creator_share_percent,
        );
    }
    Ok(out)
}
