use std::collections::BTreeMap;

use thiserror::Error;

use crate::crypto::PublicKey;
use crate::MinerId;

#[derive(Clone, Debug, PartialEq)]
pub struct Member {
    pub id: MinerId,
    /// Reputation `R` frozen at epoch start.
    pub weight: f64,
    pub public_key: PublicKey,
}

/// The X highest-reputation miners of one epoch, ordered by descending weight.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusGroup {
    epoch: u64,
    members: Vec<Member>,
    total_weight: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupSelectError {
    #[error("group size must be at least 1")]
    EmptyGroup,
    #[error("need {wanted} miners, only {available} known")]
    NotEnoughMiners { wanted: usize, available: usize },
    #[error("no public key for miner {0}")]
    MissingKey(MinerId),
}

impl ConsensusGroup {
    pub fn new(epoch: u64, members: Vec<Member>) -> Self {
        let total_weight = members.iter().map(|m| m.weight).sum();
        Self {
            epoch,
            members,
            total_weight,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, id: MinerId) -> Option<&Member> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn contains(&self, id: MinerId) -> bool {
        self.member(id).is_some()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `ceil(2X/3)`.
    pub fn quorum_count(&self) -> usize {
        (2 * self.size()).div_ceil(3)
    }

    /// Highest-reputation member; coordinates batches and keyblock decisions.
    pub fn leader(&self) -> &Member {
        &self.members[0]
    }
}

/// Picks the `x` miners with the highest reputation, ties broken by id.
///
/// When every selected reputation is zero (no history yet), members get
/// equal weight `1/x` so the very first epochs can still pin.
pub fn select_group(
    epoch: u64,
    reputations: &BTreeMap<MinerId, f64>,
    keys: &BTreeMap<MinerId, PublicKey>,
    x: usize,
) -> Result<ConsensusGroup, GroupSelectError> {
    if x == 0 {
        return Err(GroupSelectError::EmptyGroup);
    }
    if reputations.len() < x {
        return Err(GroupSelectError::NotEnoughMiners {
            wanted: x,
            available: reputations.len(),
        });
    }
    let mut ranked: Vec<(MinerId, f64)> = reputations.iter().map(|(id, r)| (*id, *r)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(x);
    let bootstrap = ranked.iter().all(|(_, r)| *r == 0.0);
    let members = ranked
        .into_iter()
        .map(|(id, r)| {
            let public_key = *keys.get(&id).ok_or(GroupSelectError::MissingKey(id))?;
            Ok(Member {
                id,
                weight: if bootstrap { 1.0 / x as f64 } else { r },
                public_key,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConsensusGroup::new(epoch, members))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: u32) -> BTreeMap<MinerId, PublicKey> {
        (0..n).map(|i| (MinerId(i), PublicKey([i as u8; 32]))).collect()
    }

    fn ids(g: &ConsensusGroup) -> Vec<u32> {
        g.members().iter().map(|m| m.id.0).collect()
    }

    #[test]
    fn top_x_by_reputation() {
        let reps: BTreeMap<_, _> = [(0, 0.9), (1, 0.5), (2, 0.5), (3, 0.1)]
            .into_iter()
            .map(|(i, r)| (MinerId(i), r))
            .collect();
        let g = select_group(1, &reps, &keys(4), 2).unwrap();
        assert_eq!(ids(&g), vec![0, 1]);
        assert_eq!(g.quorum_count(), 2);
        assert_eq!(g.leader().id, MinerId(0));
        assert!((g.total_weight() - 1.4).abs() < 1e-12);

        let all = select_group(1, &reps, &keys(4), 4).unwrap();
        assert_eq!(ids(&all), vec![0, 1, 2, 3]);
    }

    #[test]
    fn ties_go_to_smallest_ids() {
        let reps: BTreeMap<_, _> = (0..6).rev().map(|i| (MinerId(i), 0.3)).collect();
        let g = select_group(0, &reps, &keys(6), 3).unwrap();
        assert_eq!(ids(&g), vec![0, 1, 2]);
    }

    #[test]
    fn zero_reputation_bootstrap_uses_equal_weights() {
        let reps: BTreeMap<_, _> = (0..4).map(|i| (MinerId(i), 0.0)).collect();
        let g = select_group(0, &reps, &keys(4), 4).unwrap();
        assert!(g.members().iter().all(|m| m.weight == 0.25));
    }

    #[test]
    fn errors() {
        let reps: BTreeMap<_, _> = (0..2).map(|i| (MinerId(i), 0.5)).collect();
        assert_eq!(
            select_group(0, &reps, &keys(2), 3).unwrap_err(),
            GroupSelectError::NotEnoughMiners {
                wanted: 3,
                available: 2
            }
        );
        assert_eq!(
            select_group(0, &reps, &keys(2), 0).unwrap_err(),
            GroupSelectError::EmptyGroup
        );
        assert_eq!(
            select_group(0, &reps, &keys(1), 2).unwrap_err(),
            GroupSelectError::MissingKey(MinerId(1))
        );
    }
}
