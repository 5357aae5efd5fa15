//! Register, Medical and Label transactions.

use thiserror::Error;

use super::codec::{DecodeError, DecodeErrorKind, Reader, Writer};
use super::{Digest, HashKeyT, PatientId, TxId};
use crate::crypto::{ch_verify, content_hash, sign, Hash32, Keypair, Signature, ToyGroup};
use crate::{MinerId, Round};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxType {
    Register = 0,
    Medical = 1,
    Label = 2,
}

impl TxType {
    pub fn from_u8(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(TxType::Register),
            1 => Some(TxType::Medical),
            2 => Some(TxType::Label),
            _ => None,
        }
    }
}

/// On-chain reference to one sealed record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordRef {
    /// Institution that sealed the record and whose hash key binds it.
    pub institution: MinerId,
    /// Chameleon digest over the sealed ciphertext.
    pub digest: Digest,
    /// Off-chain locator of the ciphertext.
    pub pointer: String,
    pub round: Round,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxPayload {
    Register {
        /// `H(ID || Age || ...)`.
        identity_digest: Hash32,
        /// Institution that received the registration.
        institution: MinerId,
    },
    Medical(RecordRef),
    Label {
        target: TxId,
        record: RecordRef,
    },
}

impl TxPayload {
    pub fn tx_type(&self) -> TxType {
        match self {
            TxPayload::Register { .. } => TxType::Register,
            TxPayload::Medical(_) => TxType::Medical,
            TxPayload::Label { .. } => TxType::Label,
        }
    }

    pub fn record(&self) -> Option<&RecordRef> {
        match self {
            TxPayload::Register { .. } => None,
            TxPayload::Medical(r) | TxPayload::Label { record: r, .. } => Some(r),
        }
    }

    /// Institution the transaction was sent to.
    pub fn receiver(&self) -> MinerId {
        match self {
            TxPayload::Register { institution, .. } => *institution,
            TxPayload::Medical(r) | TxPayload::Label { record: r, .. } => r.institution,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxBuildError {
    #[error("label transaction without target")]
    MissingLabelTarget,
    #[error("record payload requires the institution hash key")]
    MissingHashKey,
    #[error("chameleon proof does not verify")]
    InvalidProof,
}

/// `(Type, Data, sig)` with a content-derived id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub payload: TxPayload,
    pub fee: u64,
    pub sender: PatientId,
    pub signature: Signature,
    id: TxId,
}

const SIGNING_DOMAIN: &[u8] = b"spchain/tx/v1";

impl Transaction {
    pub fn id(&self) -> TxId {
        self.id
    }

    pub fn tx_type(&self) -> TxType {
        self.payload.tx_type()
    }

    /// Bytes covered by the sender signature.
    pub fn signing_bytes(group: &ToyGroup, payload: &TxPayload, fee: u64, sender: &PatientId) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(SIGNING_DOMAIN);
        encode_unsigned(&mut w, group, payload, fee, sender);
        w.finish()
    }

    pub fn encode(&self, group: &ToyGroup) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w, group);
        w.finish()
    }

    pub(crate) fn write(&self, w: &mut Writer, group: &ToyGroup) {
        encode_unsigned(w, group, &self.payload, self.fee, &self.sender);
        w.signature(&self.signature);
    }

    pub fn decode(bytes: &[u8], group: &ToyGroup) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r, group)?;
        r.finish()?;
        Ok(tx)
    }

    pub(crate) fn read(r: &mut Reader<'_>, group: &ToyGroup) -> Result<Self, DecodeError> {
        let tag_at = r.offset();
        let tag = r.u8()?;
        let payload = match TxType::from_u8(tag) {
            Some(TxType::Register) => TxPayload::Register {
                identity_digest: r.hash()?,
                institution: r.miner()?,
            },
            Some(TxType::Medical) => TxPayload::Medical(read_record(r, group)?),
            Some(TxType::Label) => TxPayload::Label {
                target: r.hash()?,
                record: read_record(r, group)?,
            },
            None => return Err(r.error_at(tag_at, DecodeErrorKind::UnknownTxType(tag))),
        };
        let fee = r.u64()?;
        let sender = r.public_key()?;
        let signature = r.signature()?;
        Ok(Self::assemble(group, payload, fee, sender, signature))
    }

    fn assemble(group: &ToyGroup, payload: TxPayload, fee: u64, sender: PatientId, signature: Signature) -> Self {
        let mut tx = Self {
            payload,
            fee,
            sender,
            signature,
            id: Hash32::ZERO,
        };
        tx.id = content_hash(&tx.encode(group));
        tx
    }

    /// Reassembles a transaction from parts without checking the signature.
    pub fn from_parts(group: &ToyGroup, payload: TxPayload, fee: u64, sender: PatientId, signature: Signature) -> Self {
        Self::assemble(group, payload, fee, sender, signature)
    }
}

fn encode_unsigned(w: &mut Writer, group: &ToyGroup, payload: &TxPayload, fee: u64, sender: &PatientId) {
    w.u8(payload.tx_type() as u8);
    match payload {
        TxPayload::Register {
            identity_digest,
            institution,
        } => {
            w.hash(identity_digest).miner(*institution);
        }
        TxPayload::Medical(record) => write_record(w, group, record),
        TxPayload::Label { target, record } => {
            w.hash(target);
            write_record(w, group, record);
        }
    }
    w.u64(fee).public_key(sender);
}

fn write_record(w: &mut Writer, group: &ToyGroup, rec: &RecordRef) {
    w.miner(rec.institution)
        .digest(group, &rec.digest)
        .str(&rec.pointer)
        .u64(rec.round);
}

fn read_record(r: &mut Reader<'_>, group: &ToyGroup) -> Result<RecordRef, DecodeError> {
    Ok(RecordRef {
        institution: r.miner()?,
        digest: r.digest(group)?,
        pointer: r.string()?,
        round: r.u64()?,
    })
}

/// Builds and signs a transaction.
///
/// Record-carrying payloads must come with the receiving institution's hash
/// key and a digest that verifies under it.
pub fn build_tx(
    group: &ToyGroup,
    payload: TxPayload,
    fee: u64,
    key: &Keypair,
    hash_key: Option<&HashKeyT>,
) -> Result<Transaction, TxBuildError> {
    if let TxPayload::Label { target, .. } = &payload {
        if *target == Hash32::ZERO {
            return Err(TxBuildError::MissingLabelTarget);
        }
    }
    if let Some(record) = payload.record() {
        let hk = hash_key.ok_or(TxBuildError::MissingHashKey)?;
        if !ch_verify(group, hk, record.digest.message, &record.digest) {
            return Err(TxBuildError::InvalidProof);
        }
    }
    let sender = key.public();
    let signature = sign(&Transaction::signing_bytes(group, &payload, fee, &sender), key);
    Ok(Transaction::assemble(group, payload, fee, sender, signature))
}
