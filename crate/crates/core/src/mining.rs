//! Keyblock puzzle and fork choice.
//!
//! The puzzle hashes the previous keyblock together with the last
//! microblock of the penultimate round, so rewriting microblock history
//! also invalidates the keyblocks mined on top of it. Conflicts between
//! keyblocks are settled by pinning: a pinned keyblock is final, and
//! anything that contradicts it is rejected.

use std::collections::{BTreeMap, HashMap};

use crate::crypto::{content_hash, Hash32, PublicKey, ToyGroup};
use crate::ledger::{puzzle_preimage, KeyBlock, Target, Transaction, GENESIS_MICROBLOCK_HASH};
use crate::{MinerId, Round};

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum MineResult {
    Found { block: KeyBlock, attempts: u64 },
    Exhausted { attempts: u64 },
}

/// Searches nonces `start..start + count` for one meeting `target`.
/// Returns the nonce and the number of attempts it took.
pub fn search_nonce(
    prev: &Hash32,
    penu: &Hash32,
    miner_key: &PublicKey,
    target: &Target,
    start: u64,
    count: u64,
) -> Option<(u64, u64)> {
    let mut pre = puzzle_preimage(prev, penu, start, miner_key);
    for i in 0..count {
        let nonce = start.wrapping_add(i);
        pre[64..72].copy_from_slice(&nonce.to_be_bytes());
        if target.is_met_by(&content_hash(&pre)) {
            return Some((nonce, i + 1));
        }
    }
    None
}

/// Mines on top of the view's pinned tip, trying nonces from 0.
pub fn mine_keyblock(
    view: &ChainView,
    register_txs: Vec<Transaction>,
    miner: MinerId,
    miner_key: PublicKey,
    target: Target,
    max_attempts: u64,
) -> MineResult {
    let (height, prev) = view.tip();
    let penu = view.penu_hash(height + 1);
    match search_nonce(&prev, &penu, &miner_key, &target, 0, max_attempts) {
        Some((nonce, attempts)) => MineResult::Found {
            block: KeyBlock {
                prev_keyblock_hash: prev,
                penu_microblock_hash: penu,
                nonce,
                miner,
                miner_key,
                register_txs,
                target,
                height: height + 1,
                pin_cert: None,
            },
            attempts,
        },
        None => MineResult::Exhausted { attempts: max_attempts },
    }
}

pub fn check_puzzle(block: &KeyBlock) -> bool {
    block.target.is_met_by(&block.puzzle_hash())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectKind {
    BadPuzzle,
    WrongTarget,
    /// Same height as a pinned keyblock with a different hash, or built on
    /// a pinned keyblock that is no longer the tip.
    ConflictsWithPinned,
    AlreadyPinned,
    BadPenultimate,
    UnknownParent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForkChoice {
    Accept,
    Reject(RejectKind),
    /// Extends an unpinned candidate; held until pinning resolves.
    Orphan,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PinKeyblockError {
    #[error("keyblock has no pin certificate")]
    MissingCertificate,
    #[error("keyblock does not extend the pinned tip")]
    NotOnTip,
}

/// An honest node's view: the pinned prefix, unpinned candidates, and the
/// last microblock hash of each closed round.
#[derive(Clone, Debug)]
pub struct ChainView {
    group: ToyGroup,
    target: Target,
    pinned: Vec<(Hash32, KeyBlock)>,
    candidates: HashMap<Hash32, KeyBlock>,
    round_tails: BTreeMap<Round, Hash32>,
}

impl ChainView {
    pub fn new(group: ToyGroup, target: Target) -> Self {
        let genesis = KeyBlock::genesis();
        let hash = genesis.hash(&group);
        Self {
            group,
            target,
            pinned: vec![(hash, genesis)],
            candidates: HashMap::new(),
            round_tails: BTreeMap::new(),
        }
    }

    pub fn target(&self) -> Target {
        self.target
    }

    /// `(height, hash)` of the pinned tip.
    pub fn tip(&self) -> (u64, Hash32) {
        let (hash, block) = self.pinned.last().expect("genesis is always pinned");
        (block.height, *hash)
    }

    pub fn pinned_height(&self) -> u64 {
        self.tip().0
    }

    pub fn pinned_at(&self, height: u64) -> Option<&KeyBlock> {
        self.pinned.get(height as usize).map(|(_, b)| b)
    }

    pub fn pinned_hash_at(&self, height: u64) -> Option<Hash32> {
        self.pinned.get(height as usize).map(|(h, _)| *h)
    }

    pub fn pinned(&self) -> impl Iterator<Item = &KeyBlock> {
        self.pinned.iter().map(|(_, b)| b)
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// Records the hash of the last microblock created in `round`.
    pub fn set_round_tail(&mut self, round: Round, hash: Hash32) {
        self.round_tails.insert(round, hash);
    }

    /// Penultimate-microblock hash required of a keyblock at `height`.
    pub fn penu_hash(&self, height: u64) -> Hash32 {
        if height < 2 {
            return GENESIS_MICROBLOCK_HASH;
        }
        self.round_tails
            .get(&(height - 2))
            .copied()
            .unwrap_or(GENESIS_MICROBLOCK_HASH)
    }

    pub fn fork_choice(&self, candidate: &KeyBlock) -> ForkChoice {
        if candidate.target != self.target {
            return ForkChoice::Reject(RejectKind::WrongTarget);
        }
        if !check_puzzle(candidate) {
            return ForkChoice::Reject(RejectKind::BadPuzzle);
        }
        let (tip_height, tip_hash) = self.tip();
        if let Some(pinned) = self.pinned_hash_at(candidate.height) {
            return if pinned == candidate.hash(&self.group) {
                ForkChoice::Reject(RejectKind::AlreadyPinned)
            } else {
                ForkChoice::Reject(RejectKind::ConflictsWithPinned)
            };
        }
        if candidate.prev_keyblock_hash == tip_hash && candidate.height == tip_height + 1 {
            if candidate.penu_microblock_hash != self.penu_hash(candidate.height) {
                return ForkChoice::Reject(RejectKind::BadPenultimate);
            }
            return ForkChoice::Accept;
        }
        if let Some(parent) = self.candidates.get(&candidate.prev_keyblock_hash) {
            if parent.height + 1 == candidate.height {
                return ForkChoice::Orphan;
            }
        }
        if self.pinned.iter().any(|(h, _)| *h == candidate.prev_keyblock_hash) {
            return ForkChoice::Reject(RejectKind::ConflictsWithPinned);
        }
        ForkChoice::Reject(RejectKind::UnknownParent)
    }

    /// Holds an accepted or orphaned keyblock until it is pinned or dropped.
    pub fn add_candidate(&mut self, block: KeyBlock) -> Hash32 {
        let hash = block.hash(&self.group);
        self.candidates.insert(hash, block);
        hash
    }

    /// Makes `block` final. Candidates at or below its height are dropped.
    pub fn pin(&mut self, block: KeyBlock) -> Result<Hash32, PinKeyblockError> {
        if block.pin_cert.is_none() {
            return Err(PinKeyblockError::MissingCertificate);
        }
        let (tip_height, tip_hash) = self.tip();
        if block.prev_keyblock_hash != tip_hash || block.height != tip_height + 1 {
            return Err(PinKeyblockError::NotOnTip);
        }
        let hash = block.hash(&self.group);
        let height = block.height;
        self.pinned.push((hash, block));
        self.candidates.retain(|_, c| c.height > height);
        Ok(hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Keypair;
    use crate::ledger::PinCertificate;

    fn key() -> PublicKey {
        Keypair::from_seed([3; 32]).public()
    }

    fn certify(mut b: KeyBlock) -> KeyBlock {
        b.pin_cert = Some(PinCertificate {
            subject: Hash32::ZERO,
            epoch: b.height,
            group_size: 1,
            group_weight: 1.0,
            signers: Vec::new(),
        });
        b
    }

    fn mined(view: &ChainView, miner: u32) -> KeyBlock {
        let pk = Keypair::from_seed([miner as u8; 32]).public();
        match mine_keyblock(view, Vec::new(), MinerId(miner), pk, view.target(), 1 << 20) {
            MineResult::Found { block, .. } => block,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_pass_target_accepts_nonce_zero() {
        let view = ChainView::new(ToyGroup::default_group(), Target::MAX);
        match mine_keyblock(&view, Vec::new(), MinerId(0), key(), Target::MAX, 1) {
            MineResult::Found { block, attempts } => {
                assert_eq!(block.nonce, 0);
                assert_eq!(attempts, 1);
                assert!(check_puzzle(&block));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exhaustion_is_reported() {
        let view = ChainView::new(ToyGroup::default_group(), Target::from_leading_zero_bits(64));
        assert_eq!(
            mine_keyblock(&view, Vec::new(), MinerId(0), key(), view.target(), 10),
            MineResult::Exhausted { attempts: 10 }
        );
    }

    #[test]
    fn puzzle_binds_nonce_and_penultimate_microblock() {
        let view = ChainView::new(ToyGroup::default_group(), Target::from_leading_zero_bits(12));
        let block = mined(&view, 1);
        assert!(check_puzzle(&block));
        let mut bumped = block.clone();
        bumped.nonce += 1;
        assert!(!check_puzzle(&bumped));
        let mut swapped = block;
        swapped.penu_microblock_hash = Hash32([0xab; 32]);
        assert!(!check_puzzle(&swapped));
    }

    #[test]
    fn fork_choice_rules() {
        let group = ToyGroup::default_group();
        let mut view = ChainView::new(group, Target::from_leading_zero_bits(4));
        let a = mined(&view, 1);
        let b = mined(&view, 2);
        assert_eq!(view.fork_choice(&a), ForkChoice::Accept);
        assert_eq!(view.fork_choice(&b), ForkChoice::Accept);
        let a_hash = view.add_candidate(a.clone());
        view.add_candidate(b.clone());

        // Two blocks on the unpinned candidate: both held.
        let on_a = |seed: u32| {
            let pk = Keypair::from_seed([seed as u8; 32]).public();
            let (nonce, _) = search_nonce(&a_hash, &view.penu_hash(2), &pk, &view.target(), 0, 1 << 20).unwrap();
            KeyBlock {
                prev_keyblock_hash: a_hash,
                penu_microblock_hash: view.penu_hash(2),
                nonce,
                miner: MinerId(seed),
                miner_key: pk,
                register_txs: Vec::new(),
                target: view.target(),
                height: 2,
                pin_cert: None,
            }
        };
        let (c1, c2) = (on_a(5), on_a(6));
        assert_eq!(view.fork_choice(&c1), ForkChoice::Orphan);
        assert_eq!(view.fork_choice(&c2), ForkChoice::Orphan);

        view.pin(certify(a.clone())).unwrap();
        // b sits at a pinned height with a different hash.
        assert_eq!(
            view.fork_choice(&b),
            ForkChoice::Reject(RejectKind::ConflictsWithPinned)
        );
        assert_eq!(
            view.fork_choice(&certify(a)),
            ForkChoice::Reject(RejectKind::AlreadyPinned)
        );
        assert_eq!(view.fork_choice(&c1), ForkChoice::Accept);

        let mut bad_penu = c1.clone();
        bad_penu.penu_microblock_hash = Hash32([1; 32]);
        assert_ne!(view.fork_choice(&bad_penu), ForkChoice::Accept);
    }

    #[test]
    fn penultimate_hash_tracks_round_tails() {
        let mut view = ChainView::new(ToyGroup::default_group(), Target::MAX);
        assert_eq!(view.penu_hash(0), GENESIS_MICROBLOCK_HASH);
        assert_eq!(view.penu_hash(1), GENESIS_MICROBLOCK_HASH);
        assert_eq!(view.penu_hash(2), GENESIS_MICROBLOCK_HASH);
        view.set_round_tail(1, Hash32([7; 32]));
        assert_eq!(view.penu_hash(3), Hash32([7; 32]));
    }

    #[test]
    fn pin_requires_certificate_and_tip() {
        let mut view = ChainView::new(ToyGroup::default_group(), Target::MAX);
        let a = mined(&view, 1);
        assert_eq!(view.pin(a.clone()), Err(PinKeyblockError::MissingCertificate));
        let mut off = certify(a.clone());
        off.height = 5;
        assert_eq!(view.pin(off), Err(PinKeyblockError::NotOnTip));
        view.pin(certify(a)).unwrap();
        assert_eq!(view.pinned_height(), 1);
    }
}
