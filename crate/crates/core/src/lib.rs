//! Core protocol library for a keyblock/microblock ledger that stores
//! per-patient medical records.
//!
//! Records are bound on chain by a key-exposure-free chameleon hash so an
//! institution holding the trapdoor can redact without breaking hash links.
//! Keyblocks and transactions become final once a reputation-weighted
//! consensus group pins them.
//!
//! Module map:
//! - [`crypto`]: toy bilinear group, chameleon hash, signatures, envelope.
//! - [`ledger`]: transactions, blocks, codec, institution root, chain state.
//! - [`mining`]: keyblock puzzle and fork choice over the pinned prefix.
//! - [`consensus`]: reputation, group selection, pinning, scheduler, rewards.
//! - [`node`]: patient/institution actors and the off-chain record store.

pub mod consensus;
pub mod crypto;
pub mod ledger;
pub mod mining;
pub mod node;

/// Identifier of a miner. Every medical institution is also a miner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MinerId(pub u32);

impl std::fmt::Display for MinerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "m{:03}", self.0)
    }
}

/// Keyblock round number; round `r` is the round of the keyblock at height `r`.
pub type Round = u64;
