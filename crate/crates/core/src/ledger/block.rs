//! Keyblocks, patient microblocks, and their canonical encoding.

use std::fmt;

use thiserror::Error;

use super::codec::{DecodeError, DecodeErrorKind, Reader, Writer};
use super::pin::{PinCertificate, PinError};
use super::tx::{Transaction, TxType};
use super::{Digest, PatientId, TxId};
use crate::consensus::ConsensusGroup;
use crate::crypto::{content_hash, Hash32, PublicKey, ToyGroup};
use crate::{MinerId, Round};

/// 256-bit mining threshold; a keyblock is valid when `H(preimage) < target`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Target(pub [u8; 32]);

impl Target {
    /// `2^256 - 1`: every hash except all-ones passes.
    pub const MAX: Target = Target([0xff; 32]);

    /// Threshold requiring `bits` leading zero bits, i.e. `2^(256 - bits)`.
    pub fn from_leading_zero_bits(bits: u32) -> Target {
        if bits == 0 {
            return Target::MAX;
        }
        let bits = bits.min(255);
        let mut t = [0u8; 32];
        let pos = 256 - bits; // bit index from the least significant end
        let byte = 31 - (pos / 8) as usize;
        t[byte] = 1 << (pos % 8);
        Target(t)
    }

    pub fn is_met_by(&self, hash: &Hash32) -> bool {
        hash.as_bytes() < &self.0
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target({})", hex::encode(self.0))
    }
}

/// Hash of the "penultimate microblock" used before any exists.
pub const GENESIS_MICROBLOCK_HASH: Hash32 = Hash32(*b"spchain-genesis-microblock-hash!");

#[derive(Clone, Debug, PartialEq)]
pub struct KeyBlock {
    pub prev_keyblock_hash: Hash32,
    pub penu_microblock_hash: Hash32,
    pub nonce: u64,
    pub miner: MinerId,
    pub miner_key: PublicKey,
    pub register_txs: Vec<Transaction>,
    pub target: Target,
    pub height: u64,
    pub pin_cert: Option<PinCertificate>,
}

/// `prev_keyblock_hash || penu_microblock_hash || nonce || PK`.
pub fn puzzle_preimage(prev: &Hash32, penu: &Hash32, nonce: u64, miner_key: &PublicKey) -> [u8; 104] {
    let mut out = [0u8; 104];
    out[..32].copy_from_slice(prev.as_bytes());
    out[32..64].copy_from_slice(penu.as_bytes());
    out[64..72].copy_from_slice(&nonce.to_be_bytes());
    out[72..].copy_from_slice(&miner_key.0);
    out
}

impl KeyBlock {
    /// Genesis keyblock, fixed by the system operator.
    pub fn genesis() -> Self {
        Self {
            prev_keyblock_hash: Hash32::ZERO,
            penu_microblock_hash: GENESIS_MICROBLOCK_HASH,
            nonce: 0,
            miner: MinerId(u32::MAX),
            miner_key: PublicKey([0; 32]),
            register_txs: Vec::new(),
            target: Target::MAX,
            height: 0,
            pin_cert: None,
        }
    }

    pub fn puzzle_hash(&self) -> Hash32 {
        content_hash(&puzzle_preimage(
            &self.prev_keyblock_hash,
            &self.penu_microblock_hash,
            self.nonce,
            &self.miner_key,
        ))
    }

    /// Block id: hash of the encoding without the pin certificate.
    pub fn hash(&self, group: &ToyGroup) -> Hash32 {
        let mut w = Writer::new();
        self.write_body(&mut w, group);
        content_hash(&w.finish())
    }

    fn write_body(&self, w: &mut Writer, group: &ToyGroup) {
        w.hash(&self.prev_keyblock_hash)
            .hash(&self.penu_microblock_hash)
            .u64(self.nonce)
            .miner(self.miner)
            .public_key(&self.miner_key)
            .raw(&self.target.0)
            .u64(self.height)
            .u32(self.register_txs.len() as u32);
        for tx in &self.register_txs {
            tx.write(w, group);
        }
    }

    fn write(&self, w: &mut Writer, group: &ToyGroup) {
        self.write_body(w, group);
        write_opt_cert(w, self.pin_cert.as_ref());
    }

    fn read(r: &mut Reader<'_>, group: &ToyGroup) -> Result<Self, DecodeError> {
        let prev_keyblock_hash = r.hash()?;
        let penu_microblock_hash = r.hash()?;
        let nonce = r.u64()?;
        let miner = r.miner()?;
        let miner_key = r.public_key()?;
        let target = Target(r.hash()?.0);
        let height = r.u64()?;
        let n = r.len(1)?;
        let mut register_txs = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.offset();
            let tx = Transaction::read(r, group)?;
            if tx.tx_type() != TxType::Register {
                return Err(r.error_at(
                    at,
                    DecodeErrorKind::InvalidTag(tx.tx_type() as u8, "keyblock transaction"),
                ));
            }
            register_txs.push(tx);
        }
        let pin_cert = read_opt_cert(r)?;
        Ok(Self {
            prev_keyblock_hash,
            penu_microblock_hash,
            nonce,
            miner,
            miner_key,
            register_txs,
            target,
            height,
            pin_cert,
        })
    }
}

/// A Medical or Label transaction together with its pinning certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedTx {
    pub tx: Transaction,
    pub cert: PinCertificate,
}

/// The single block holding one patient's full record history.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroBlock {
    pub owner: PatientId,
    pub institution_root: Digest,
    pub creator: MinerId,
    pub round: Round,
    /// Previous microblock created in the same round, or the round's keyblock.
    pub prev_hash: Hash32,
    pub creation_cert: Option<PinCertificate>,
    entries: Vec<PinnedTx>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AppendError {
    #[error("unpinned transaction: {0}")]
    Unpinned(PinError),
    #[error("transaction sender is not the microblock owner")]
    WrongOwner,
    #[error("only medical and label transactions go into microblocks")]
    NotRecordTx,
    #[error("transaction round {tx} precedes microblock round {block}")]
    RoundBeforeRegistration { tx: Round, block: Round },
    #[error("transaction already present")]
    Duplicate,
}

impl MicroBlock {
    pub fn new(owner: PatientId, institution_root: Digest, creator: MinerId, round: Round, prev_hash: Hash32) -> Self {
        Self {
            owner,
            institution_root,
            creator,
            round,
            prev_hash,
            creation_cert: None,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[PinnedTx] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, id: &TxId) -> Option<usize> {
        self.entries.iter().position(|e| e.tx.id() == *id)
    }

    pub fn get(&self, id: &TxId) -> Option<&PinnedTx> {
        self.position(id).map(|i| &self.entries[i])
    }

    /// Subject signed when the group pins the microblock's creation.
    pub fn header_hash(&self, group: &ToyGroup) -> Hash32 {
        let mut w = Writer::new();
        self.write_header(&mut w, group);
        content_hash(&w.finish())
    }

    /// Hash over the full encoding, including appended transactions.
    pub fn hash(&self, group: &ToyGroup) -> Hash32 {
        let mut w = Writer::new();
        self.write(&mut w, group);
        content_hash(&w.finish())
    }

    /// Newest transaction that (transitively) labels `id`, if any.
    pub fn newest_label(&self, id: &TxId) -> Option<&PinnedTx> {
        let mut current = *id;
        let mut found = None;
        let mut from = self.position(id)? + 1;
        loop {
            let next =
                self.entries[from..].iter().enumerate().rev().find(
                    |(_, e)| matches!(&e.tx.payload, super::TxPayload::Label { target, .. } if *target == current),
                );
            match next {
                Some((offset, e)) => {
                    found = Some(e);
                    current = e.tx.id();
                    from += offset + 1;
                }
                None => return found,
            }
        }
    }

    pub(crate) fn check_append(&self, tx: &Transaction) -> Result<(), AppendError> {
        let record = tx.payload.record().ok_or(AppendError::NotRecordTx)?;
        if tx.sender != self.owner {
            return Err(AppendError::WrongOwner);
        }
        if record.round < self.round {
            return Err(AppendError::RoundBeforeRegistration {
                tx: record.round,
                block: self.round,
            });
        }
        if self.position(&tx.id()).is_some() {
            return Err(AppendError::Duplicate);
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, entry: PinnedTx) {
        self.entries.push(entry);
    }

    fn write_header(&self, w: &mut Writer, group: &ToyGroup) {
        w.public_key(&self.owner)
            .digest(group, &self.institution_root)
            .miner(self.creator)
            .u64(self.round)
            .hash(&self.prev_hash);
    }

    fn write(&self, w: &mut Writer, group: &ToyGroup) {
        self.write_header(w, group);
        write_opt_cert(w, self.creation_cert.as_ref());
        w.u32(self.entries.len() as u32);
        for e in &self.entries {
            e.tx.write(w, group);
            e.cert.write(w);
        }
    }

    fn read(r: &mut Reader<'_>, group: &ToyGroup) -> Result<Self, DecodeError> {
        let owner = r.public_key()?;
        let institution_root = r.digest(group)?;
        let creator = r.miner()?;
        let round = r.u64()?;
        let prev_hash = r.hash()?;
        let creation_cert = read_opt_cert(r)?;
        let n = r.len(1)?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.offset();
            let tx = Transaction::read(r, group)?;
            if tx.tx_type() == TxType::Register {
                return Err(r.error_at(at, DecodeErrorKind::InvalidTag(0, "microblock transaction")));
            }
            let cert = PinCertificate::read(r)?;
            entries.push(PinnedTx { tx, cert });
        }
        Ok(Self {
            owner,
            institution_root,
            creator,
            round,
            prev_hash,
            creation_cert,
            entries,
        })
    }
}

/// Appends a pinned Medical/Label transaction, returning the new microblock.
///
/// Existing entries are carried over untouched.
pub fn append_pinned_tx(
    microblock: &MicroBlock,
    tx: Transaction,
    cert: PinCertificate,
    group: &ConsensusGroup,
) -> Result<MicroBlock, AppendError> {
    cert.verify(&tx.id(), group).map_err(AppendError::Unpinned)?;
    microblock.check_append(&tx)?;
    let mut out = microblock.clone();
    out.push(PinnedTx { tx, cert });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Key(KeyBlock),
    Micro(MicroBlock),
}

const TAG_KEY: u8 = 0x01;
const TAG_MICRO: u8 = 0x02;

pub fn encode_block(block: &Block, group: &ToyGroup) -> Vec<u8> {
    let mut w = Writer::new();
    match block {
        Block::Key(k) => {
            w.u8(TAG_KEY);
            k.write(&mut w, group);
        }
        Block::Micro(m) => {
            w.u8(TAG_MICRO);
            m.write(&mut w, group);
        }
    }
    w.finish()
}

pub fn decode_block(bytes: &[u8], group: &ToyGroup) -> Result<Block, DecodeError> {
    let mut r = Reader::new(bytes);
    let block = match r.u8()? {
        TAG_KEY => Block::Key(KeyBlock::read(&mut r, group)?),
        TAG_MICRO => Block::Micro(MicroBlock::read(&mut r, group)?),
        t => return Err(r.error_at(0, DecodeErrorKind::UnknownBlockTag(t))),
    };
    r.finish()?;
    Ok(block)
}

fn write_opt_cert(w: &mut Writer, cert: Option<&PinCertificate>) {
    match cert {
        None => {
            w.u8(0);
        }
        Some(c) => {
            w.u8(1);
            c.write(w);
        }
    }
}

fn read_opt_cert(r: &mut Reader<'_>) -> Result<Option<PinCertificate>, DecodeError> {
    if r.option_tag("pin certificate")? {
        Ok(Some(PinCertificate::read(r)?))
    } else {
        Ok(None)
    }
}
