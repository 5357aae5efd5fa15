//! Pinned chain state: registered patients, their microblocks, and the
//! institution hash keys needed to check record proofs.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use super::block::{AppendError, MicroBlock, PinnedTx};
use super::pin::{PinCertificate, PinError};
use super::tx::{RecordRef, Transaction, TxPayload, TxType};
use super::{HashKeyT, PatientId, TxId};
use crate::consensus::ConsensusGroup;
use crate::crypto::{ch_verify, verify_sig, Hash32, ToyGroup};
use crate::{MinerId, Round};

/// Why a transaction failed validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    BadSignature,
    Unregistered,
    AlreadyRegistered,
    UnknownInstitution,
    BadProof,
    LabelTargetMissing,
    LabelTargetForeign,
    LabelWrongInstitution,
    FutureRound,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::BadSignature => "BAD_SIGNATURE",
            RejectReason::Unregistered => "UNREGISTERED",
            RejectReason::AlreadyRegistered => "ALREADY_REGISTERED",
            RejectReason::UnknownInstitution => "UNKNOWN_INSTITUTION",
            RejectReason::BadProof => "BAD_PROOF",
            RejectReason::LabelTargetMissing => "LABEL_TARGET_MISSING",
            RejectReason::LabelTargetForeign => "LABEL_TARGET_FOREIGN",
            RejectReason::LabelWrongInstitution => "LABEL_WRONG_INSTITUTION",
            RejectReason::FutureRound => "FUTURE_ROUND",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("invalid transaction: {0}")]
    Invalid(RejectReason),
    #[error("unpinned transaction: {0}")]
    Unpinned(#[from] PinError),
    #[error(transparent)]
    Append(AppendError),
    #[error("patient has no microblock")]
    NoMicroblock,
    #[error("patient already has a microblock")]
    DuplicateMicroblock,
    #[error("unknown patient")]
    UnknownPatient,
}

impl From<AppendError> for StateError {
    fn from(e: AppendError) -> Self {
        match e {
            AppendError::Unpinned(p) => StateError::Unpinned(p),
            other => StateError::Append(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registration {
    pub identity_digest: Hash32,
    pub institution: MinerId,
    pub round: Round,
    pub tx_id: TxId,
}

/// One line of a patient's history, with label resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry {
    pub tx_id: TxId,
    pub tx_type: TxType,
    pub record: RecordRef,
    /// For labels: the transaction this one corrects.
    pub corrects: Option<TxId>,
    /// Newest label that (transitively) supersedes this entry.
    pub superseded_by: Option<TxId>,
}

#[derive(Debug)]
pub struct ChainState {
    group: ToyGroup,
    round: Round,
    institutions: HashMap<MinerId, HashKeyT>,
    patients: HashMap<PatientId, Registration>,
    identities: HashMap<Hash32, PatientId>,
    microblocks: HashMap<PatientId, MicroBlock>,
    tx_owner: HashMap<TxId, PatientId>,
    reads: AtomicU64,
}

impl ChainState {
    pub fn new(group: ToyGroup) -> Self {
        Self {
            group,
            round: 0,
            institutions: HashMap::new(),
            patients: HashMap::new(),
            identities: HashMap::new(),
            microblocks: HashMap::new(),
            tx_owner: HashMap::new(),
            reads: AtomicU64::new(0),
        }
    }

    pub fn group(&self) -> &ToyGroup {
        &self.group
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn set_round(&mut self, round: Round) {
        self.round = round;
    }

    pub fn add_institution(&mut self, id: MinerId, hk: HashKeyT) {
        self.institutions.insert(id, hk);
    }

    pub fn institution_key(&self, id: MinerId) -> Option<&HashKeyT> {
        self.institutions.get(&id)
    }

    pub fn registration(&self, patient: &PatientId) -> Option<&Registration> {
        self.patients.get(patient)
    }

    pub fn is_registered(&self, patient: &PatientId) -> bool {
        self.patients.contains_key(patient)
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn microblock_count(&self) -> usize {
        self.microblocks.len()
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientId> {
        self.patients.keys()
    }

    pub fn validate_tx(&self, tx: &Transaction) -> Result<(), RejectReason> {
        let signed = Transaction::signing_bytes(&self.group, &tx.payload, tx.fee, &tx.sender);
        if !verify_sig(&signed, &tx.signature, &tx.sender) {
            return Err(RejectReason::BadSignature);
        }
        match &tx.payload {
            TxPayload::Register {
                identity_digest,
                institution,
            } => {
                if self.patients.contains_key(&tx.sender) || self.identities.contains_key(identity_digest) {
                    return Err(RejectReason::AlreadyRegistered);
                }
                if !self.institutions.contains_key(institution) {
                    return Err(RejectReason::UnknownInstitution);
                }
                Ok(())
            }
            TxPayload::Medical(record) => {
                self.check_record(tx, record)?;
                Ok(())
            }
            TxPayload::Label { target, record } => {
                self.check_record(tx, record)?;
                match self.tx_owner.get(target) {
                    None => Err(RejectReason::LabelTargetMissing),
                    Some(owner) if *owner != tx.sender => Err(RejectReason::LabelTargetForeign),
                    Some(owner) => {
                        let original = self.microblocks[owner]
                            .get(target)
                            .and_then(|e| e.tx.payload.record())
                            .ok_or(RejectReason::LabelTargetMissing)?;
                        if original.institution != record.institution {
                            return Err(RejectReason::LabelWrongInstitution);
                        }
                        Ok(())
                    }
                }
            }
        }
    }

    fn check_record(&self, tx: &Transaction, record: &RecordRef) -> Result<(), RejectReason> {
        if !self.patients.contains_key(&tx.sender) {
            return Err(RejectReason::Unregistered);
        }
        let hk = self
            .institutions
            .get(&record.institution)
            .ok_or(RejectReason::UnknownInstitution)?;
        if !ch_verify(&self.group, hk, record.digest.message, &record.digest) {
            return Err(RejectReason::BadProof);
        }
        if record.round > self.round {
            return Err(RejectReason::FutureRound);
        }
        Ok(())
    }

    /// Records a Register transaction from a pinned keyblock of `round`.
    pub fn apply_register(&mut self, tx: &Transaction, round: Round) -> Result<(), StateError> {
        self.validate_tx(tx).map_err(StateError::Invalid)?;
        let TxPayload::Register {
            identity_digest,
            institution,
        } = &tx.payload
        else {
            return Err(StateError::Invalid(RejectReason::Unregistered));
        };
        self.identities.insert(*identity_digest, tx.sender);
        self.patients.insert(
            tx.sender,
            Registration {
                identity_digest: *identity_digest,
                institution: *institution,
                round,
                tx_id: tx.id(),
            },
        );
        Ok(())
    }

    /// Installs the (single) microblock of a registered patient.
    pub fn insert_microblock(&mut self, mb: MicroBlock) -> Result<(), StateError> {
        if !self.patients.contains_key(&mb.owner) {
            return Err(StateError::UnknownPatient);
        }
        if self.microblocks.contains_key(&mb.owner) {
            return Err(StateError::DuplicateMicroblock);
        }
        for e in mb.entries() {
            self.tx_owner.insert(e.tx.id(), mb.owner);
        }
        self.microblocks.insert(mb.owner, mb);
        Ok(())
    }

    /// Validates, checks the pin certificate, and appends in place.
    pub fn append_pinned(
        &mut self,
        tx: Transaction,
        cert: PinCertificate,
        group: &ConsensusGroup,
    ) -> Result<(), StateError> {
        self.validate_tx(&tx).map_err(StateError::Invalid)?;
        cert.verify(&tx.id(), group)?;
        let mb = self.microblocks.get_mut(&tx.sender).ok_or(StateError::NoMicroblock)?;
        mb.check_append(&tx)?;
        self.tx_owner.insert(tx.id(), tx.sender);
        mb.push(PinnedTx { tx, cert });
        Ok(())
    }

    /// Direct microblock access; counted as one store read.
    pub fn microblock(&self, patient: &PatientId) -> Option<&MicroBlock> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.microblocks.get(patient)
    }

    /// Chronological history of one patient with labels resolved.
    ///
    /// Costs exactly one microblock lookup regardless of chain size.
    pub fn history(&self, patient: &PatientId) -> Result<Vec<HistoryEntry>, StateError> {
        if !self.patients.contains_key(patient) {
            return Err(StateError::UnknownPatient);
        }
        let mb = self.microblock(patient).ok_or(StateError::NoMicroblock)?;
        Ok(mb
            .entries()
            .iter()
            .map(|e| {
                let id = e.tx.id();
                HistoryEntry {
                    tx_id: id,
                    tx_type: e.tx.tx_type(),
                    record: e.tx.payload.record().cloned().expect("microblocks hold record txs"),
                    corrects: match &e.tx.payload {
                        TxPayload::Label { target, .. } => Some(*target),
                        _ => None,
                    },
                    superseded_by: mb.newest_label(&id).map(|l| l.tx.id()),
                }
            })
            .collect())
    }

    /// Record currently in force for `tx_id`: the newest label, or itself.
    pub fn current_record(&self, patient: &PatientId, tx_id: &TxId) -> Option<RecordRef> {
        let mb = self.microblock(patient)?;
        let entry = mb.newest_label(tx_id).or_else(|| mb.get(tx_id))?;
        entry.tx.payload.record().cloned()
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_reads(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }
}
