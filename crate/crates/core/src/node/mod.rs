//! Patient and institution actors.
//!
//! Records are sealed twice: the patient's key on the inside, the
//! institution's key on the outside. The institution keeps the ciphertext
//! off chain and only a chameleon digest plus a pointer go on chain.
//! Reading a record back needs both keys, so neither party can disclose
//! it alone.

mod store;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use store::{OffChainStore, StoreError};

use crate::crypto::chameleon::{message_scalar, Chameleon};
use crate::crypto::envelope::seal_layer;
use crate::crypto::{content_hash, unseal_layer, EnvelopeError, Keypair, Layer, SymmetricKey, ToyGroup, Trapdoor};
use crate::ledger::{
    build_tx, ChainState, HashKeyT, HistoryEntry, PatientId, RecordRef, StateError, Transaction, TxBuildError, TxId,
    TxPayload, TxType,
};
use crate::{MinerId, Round};

#[derive(Debug, Error, PartialEq)]
pub enum NodeError {
    #[error("patient is not registered")]
    Unregistered,
    #[error("patient is already registered")]
    AlreadyRegistered,
    #[error("off-chain store failed: {0}")]
    Store(#[from] StoreError),
    #[error("record {0} not found in the patient's microblock")]
    TargetNotFound(TxId),
    #[error("record {0} was not issued by this institution")]
    WrongInstitution(TxId),
    #[error("ciphertext for record {0} is missing")]
    MissingCiphertext(TxId),
    #[error("decryption failed: {0}")]
    Decrypt(#[from] EnvelopeError),
    #[error("institution refused to decrypt")]
    Refused,
    #[error(transparent)]
    Build(#[from] TxBuildError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Synthetic clinical record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmrRecord {
    pub plaintext: Vec<u8>,
    pub institution: MinerId,
    pub patient: PatientId,
    pub round: Round,
}

fn seeded(seed: u64, domain: &[u8]) -> ChaCha20Rng {
    let mut material = domain.to_vec();
    material.extend_from_slice(&seed.to_be_bytes());
    ChaCha20Rng::from_seed(content_hash(&material).0)
}

pub struct PatientActor {
    key: SymmetricKey,
    keypair: Keypair,
    registered: bool,
    tx_ids: Vec<TxId>,
    /// Plaintexts this patient has seen (its own records).
    plaintexts: Vec<Vec<u8>>,
}

impl PatientActor {
    /// Derives all keys from `seed`.
    pub fn setup(seed: u64) -> Self {
        let mut rng = seeded(seed, b"spchain/patient");
        Self {
            key: SymmetricKey::generate(&mut rng),
            keypair: Keypair::generate(&mut rng),
            registered: false,
            tx_ids: Vec::new(),
            plaintexts: Vec::new(),
        }
    }

    pub fn id(&self) -> PatientId {
        self.keypair.public()
    }

    pub fn address(&self) -> String {
        self.id().address()
    }

    pub fn keypair(&self) -> &Keypair {
        &self.keypair
    }

    pub fn key_id(&self) -> crate::crypto::KeyId {
        self.key.id()
    }

    pub fn is_registered(&self) -> bool {
        self.registered
    }

    /// Marks the registration final once its keyblock is pinned.
    pub fn confirm_registration(&mut self) {
        self.registered = true;
    }

    pub fn tx_ids(&self) -> &[TxId] {
        &self.tx_ids
    }

    pub fn plaintexts(&self) -> &[Vec<u8>] {
        &self.plaintexts
    }
}

pub struct InstitutionActor {
    id: MinerId,
    key: SymmetricKey,
    keypair: Keypair,
    hash_key: HashKeyT,
    trapdoor: Trapdoor<ToyGroup>,
    store: OffChainStore,
    /// Plaintexts this institution produced or received through sharing.
    plaintexts: Vec<Vec<u8>>,
    rng: ChaCha20Rng,
    refuses: bool,
}

impl InstitutionActor {
    /// Derives keys, including the chameleon key pair, from `seed`.
    pub fn setup(id: MinerId, seed: u64, group: &ToyGroup) -> Self {
        let mut rng = seeded(seed, b"spchain/institution");
        let key = SymmetricKey::generate(&mut rng);
        let keypair = Keypair::generate(&mut rng);
        let (hash_key, trapdoor) = Chameleon::transparent(group)
            .keygen(128, &mut rng)
            .expect("default group supports chameleon hashing");
        Self {
            id,
            key,
            keypair,
            hash_key,
            trapdoor,
            store: OffChainStore::new(),
            plaintexts: Vec::new(),
            rng,
            refuses: false,
        }
    }

    pub fn id(&self) -> MinerId {
        self.id
    }

    pub fn keypair(&self) -> &Keypair {
        &self.keypair
    }

    pub fn address(&self) -> String {
        self.keypair.public().address()
    }

    pub fn hash_key(&self) -> &HashKeyT {
        &self.hash_key
    }

    pub fn trapdoor(&self) -> &Trapdoor<ToyGroup> {
        &self.trapdoor
    }

    pub fn store(&self) -> &OffChainStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut OffChainStore {
        &mut self.store
    }

    pub fn plaintexts(&self) -> &[Vec<u8>] {
        &self.plaintexts
    }

    /// Makes the institution decline decryption requests.
    pub fn set_refusing(&mut self, refuses: bool) {
        self.refuses = refuses;
    }

    /// Every byte buffer this actor can read: its plaintexts and store.
    pub fn exposed(&self) -> impl Iterator<Item = &[u8]> {
        self.plaintexts.iter().map(Vec::as_slice).chain(self.store.blobs())
    }

    fn strip_outer(&self, pointer: &str, tx: TxId) -> Result<Vec<u8>, NodeError> {
        if self.refuses {
            return Err(NodeError::Refused);
        }
        let ct = self.store.get(pointer)?.ok_or(NodeError::MissingCiphertext(tx))?;
        Ok(unseal_layer(ct, &self.key, Layer::Outer)?)
    }
}

impl PatientActor {
    pub fn exposed(&self) -> impl Iterator<Item = &[u8]> {
        self.plaintexts.iter().map(Vec::as_slice)
    }
}

/// A third-party institution receiving shared records.
#[derive(Default)]
pub struct Recipient {
    pub received: Vec<Vec<u8>>,
}

pub fn register(
    group: &ToyGroup,
    patient: &PatientActor,
    institution: &InstitutionActor,
    identity: &str,
    fee: u64,
) -> Result<Transaction, NodeError> {
    if patient.registered {
        return Err(NodeError::AlreadyRegistered);
    }
    Ok(build_tx(
        group,
        TxPayload::Register {
            identity_digest: content_hash(identity.as_bytes()),
            institution: institution.id,
        },
        fee,
        &patient.keypair,
        None,
    )?)
}

/// Seals and stores one record, then builds the transaction that carries
/// its digest. Shared by medical uploads and labels.
fn seal_and_build(
    group: &ToyGroup,
    patient: &mut PatientActor,
    institution: &mut InstitutionActor,
    plaintext: &[u8],
    round: Round,
    fee: u64,
    label_target: Option<TxId>,
) -> Result<Transaction, NodeError> {
    if !patient.registered {
        return Err(NodeError::Unregistered);
    }
    let inner = seal_layer(plaintext, &patient.key, Layer::Inner, &mut institution.rng);
    let outer = seal_layer(&inner, &institution.key, Layer::Outer, &mut institution.rng);
    let message = message_scalar(group, &outer);
    let pointer = institution.store.put(outer)?;
    let digest = Chameleon::transparent(group)
        .hash_random(&institution.hash_key, message, &mut institution.rng)
        .expect("digest of a reduced message");
    let record = RecordRef {
        institution: institution.id,
        digest,
        pointer,
        round,
    };
    let payload = match label_target {
        None => TxPayload::Medical(record),
        Some(target) => TxPayload::Label { target, record },
    };
    let tx = build_tx(group, payload, fee, &patient.keypair, Some(&institution.hash_key))?;
    institution.plaintexts.push(plaintext.to_vec());
    patient.plaintexts.push(plaintext.to_vec());
    patient.tx_ids.push(tx.id());
    Ok(tx)
}

pub fn upload(
    group: &ToyGroup,
    patient: &mut PatientActor,
    institution: &mut InstitutionActor,
    record: &EmrRecord,
    fee: u64,
) -> Result<Transaction, NodeError> {
    seal_and_build(group, patient, institution, &record.plaintext, record.round, fee, None)
}

fn lookup(state: &ChainState, patient: &PatientId, tx_id: &TxId) -> Result<(TxType, RecordRef), NodeError> {
    let mb = state.microblock(patient).ok_or(NodeError::TargetNotFound(*tx_id))?;
    let entry = mb.get(tx_id).ok_or(NodeError::TargetNotFound(*tx_id))?;
    let record = entry
        .tx
        .payload
        .record()
        .cloned()
        .ok_or(NodeError::TargetNotFound(*tx_id))?;
    Ok((entry.tx.tx_type(), record))
}

/// Issues a correction for `wrong` with a freshly sealed record.
#[allow(clippy::too_many_arguments)]
pub fn label(
    group: &ToyGroup,
    state: &ChainState,
    patient: &mut PatientActor,
    institution: &mut InstitutionActor,
    wrong: TxId,
    corrected: &[u8],
    round: Round,
    fee: u64,
) -> Result<Transaction, NodeError> {
    let (_, original) = lookup(state, &patient.id(), &wrong)?;
    if original.institution != institution.id {
        return Err(NodeError::WrongInstitution(wrong));
    }
    seal_and_build(group, patient, institution, corrected, round, fee, Some(wrong))
}

/// Patient-mediated sharing. The source strips its layer, the patient strips
/// theirs, and only when every record decrypted does the target receive
/// the plaintexts.
pub fn share(
    state: &ChainState,
    patient: &mut PatientActor,
    source: &InstitutionActor,
    target: &mut Recipient,
    tx_ids: &[TxId],
) -> Result<usize, NodeError> {
    let mut out = Vec::with_capacity(tx_ids.len());
    for id in tx_ids {
        let (_, record) = lookup(state, &patient.id(), id)?;
        if record.institution != source.id {
            return Err(NodeError::WrongInstitution(*id));
        }
        let inner = source.strip_outer(&record.pointer, *id)?;
        out.push(unseal_layer(&inner, &patient.key, Layer::Inner)?);
    }
    let n = out.len();
    target.received.extend(out);
    Ok(n)
}

pub fn retrieve_history(state: &ChainState, patient: &PatientId) -> Result<Vec<HistoryEntry>, NodeError> {
    Ok(state.history(patient)?)
}

/// Whether `needle` occurs inside any of `haystacks`.
pub fn contains_plaintext<'a>(haystacks: impl IntoIterator<Item = &'a [u8]>, needle: &[u8]) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystacks
        .into_iter()
        .any(|h| h.len() >= needle.len() && h.windows(needle.len()).any(|w| w == needle))
}

/// Random synthetic record bytes.
pub fn synthetic_record(rng: &mut dyn RngCore, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}
