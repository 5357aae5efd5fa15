//! A synchronous desk for scripted workflows: every call runs to completion,
//! pinning included, so a test can walk a patient through registration,
//! uploads, labels and sharing step by step and inspect the result.

use std::collections::BTreeMap;

use spchain_core::consensus::{pin, select_group, ConsensusGroup, PinOutcome, Vote};
use spchain_core::crypto::{Hash32, ToyGroup};
use spchain_core::ledger::{
    encode_block, institution_leaf, institution_root, sign_vote, Block, ChainState, HistoryEntry, KeyBlock, MicroBlock,
    PinCertificate, StateError, Target, Transaction, TxId,
};
use spchain_core::mining::{mine_keyblock, ChainView, MineResult};
use spchain_core::node::{self, EmrRecord, InstitutionActor, NodeError, PatientActor, Recipient};
use spchain_core::MinerId;

pub struct Desk {
    group_params: ToyGroup,
    pub chain: ChainState,
    pub view: ChainView,
    group: ConsensusGroup,
    pub institutions: Vec<InstitutionActor>,
    pub patients: Vec<PatientActor>,
    pub recipients: Vec<Recipient>,
    next_patient_seed: u64,
}

impl Desk {
    /// `institutions` miners, all in the consensus group with equal weight.
    pub fn new(institutions: usize, seed: u64) -> Self {
        let group_params = ToyGroup::default_group();
        let mut chain = ChainState::new(group_params);
        let institutions: Vec<InstitutionActor> = (0..institutions)
            .map(|i| InstitutionActor::setup(MinerId(i as u32), seed.wrapping_mul(1000) + i as u64, &group_params))
            .collect();
        for inst in &institutions {
            chain.add_institution(inst.id(), inst.hash_key().clone());
        }
        let reps: BTreeMap<_, _> = institutions.iter().map(|i| (i.id(), 0.0)).collect();
        let keys: BTreeMap<_, _> = institutions.iter().map(|i| (i.id(), i.keypair().public())).collect();
        let group = select_group(0, &reps, &keys, institutions.len()).expect("every institution has a key");
        Self {
            view: ChainView::new(group_params, Target::from_leading_zero_bits(4)),
            group_params,
            chain,
            group,
            institutions,
            patients: Vec::new(),
            recipients: Vec::new(),
            next_patient_seed: seed.wrapping_mul(1_000_000),
        }
    }

    pub fn add_recipient(&mut self) -> usize {
        self.recipients.push(Recipient::default());
        self.recipients.len() - 1
    }

    pub fn chain_length(&self) -> u64 {
        self.view.pinned_height()
    }

    fn certify(&self, subject: &Hash32) -> PinCertificate {
        let votes: Vec<Vote> = self
            .group
            .members()
            .iter()
            .map(|m| Vote {
                signer: m.id,
                signature: sign_vote(
                    subject,
                    self.group.epoch(),
                    self.institutions[m.id.0 as usize].keypair(),
                ),
            })
            .collect();
        match pin(subject, &votes, &self.group, &mut Vec::new()) {
            PinOutcome::Certified(cert) => cert,
            PinOutcome::Insufficient { .. } => unreachable!("every member signs"),
        }
    }

    /// Mines, pins and applies one keyblock carrying `registers`.
    fn close_round(&mut self, registers: Vec<Transaction>) -> KeyBlock {
        let miner = (self.chain_length() as usize) % self.institutions.len();
        let key = self.institutions[miner].keypair().public();
        let target = self.view.target();
        let MineResult::Found { mut block, .. } =
            mine_keyblock(&self.view, registers, MinerId(miner as u32), key, target, u64::MAX)
        else {
            unreachable!("unbounded search always finds a nonce");
        };
        let hash = block.hash(&self.group_params);
        block.pin_cert = Some(self.certify(&hash));
        self.view.pin(block.clone()).expect("mined on the tip");
        let height = block.height;
        self.chain.set_round(height);
        let mut prev = hash;
        let mut tail = None;
        for tx in &block.register_txs {
            self.chain.apply_register(tx, height).expect("validated register");
            let receiver = tx.payload.receiver();
            let inst = &self.institutions[receiver.0 as usize];
            let leaf = institution_leaf(&self.group_params, receiver, &inst.keypair().public(), inst.hash_key());
            let root =
                institution_root(&self.group_params, &[leaf], inst.hash_key(), height + 1).expect("single-leaf root");
            let mut mb = MicroBlock::new(tx.sender, root, receiver, height, prev);
            let header = mb.header_hash(&self.group_params);
            mb.creation_cert = Some(self.certify(&header));
            prev = header;
            tail = Some(header);
            self.chain.insert_microblock(mb).expect("fresh patient");
        }
        if let Some(t) = tail {
            self.view.set_round_tail(height, t);
        }
        block
    }

    /// Pins an empty keyblock.
    pub fn advance_round(&mut self) {
        self.close_round(Vec::new());
    }

    /// Creates a patient that has not registered anywhere; returns its index.
    pub fn add_patient(&mut self) -> usize {
        self.patients.push(PatientActor::setup(self.next_patient_seed));
        self.next_patient_seed += 1;
        self.patients.len() - 1
    }

    /// Creates a patient and registers it at `institution`; returns its index.
    pub fn register(&mut self, institution: usize, identity: &str) -> Result<usize, NodeError> {
        let idx = self.add_patient();
        let tx = node::register(
            &self.group_params,
            &self.patients[idx],
            &self.institutions[institution],
            identity,
            2,
        )?;
        self.chain
            .validate_tx(&tx)
            .map_err(|r| NodeError::State(StateError::Invalid(r)))?;
        self.close_round(vec![tx]);
        self.patients[idx].confirm_registration();
        Ok(idx)
    }

    fn pin_record(&mut self, tx: Transaction) -> Result<TxId, NodeError> {
        let id = tx.id();
        let cert = self.certify(&id);
        self.chain.append_pinned(tx, cert, &self.group)?;
        Ok(id)
    }

    /// Seals and pins a record from `institution` for `patient`.
    pub fn upload(&mut self, patient: usize, institution: usize, plaintext: &[u8]) -> Result<TxId, NodeError> {
        let record = EmrRecord {
            plaintext: plaintext.to_vec(),
            institution: MinerId(institution as u32),
            patient: self.patients[patient].id(),
            round: self.chain.round(),
        };
        let tx = node::upload(
            &self.group_params,
            &mut self.patients[patient],
            &mut self.institutions[institution],
            &record,
            1,
        )?;
        self.pin_record(tx)
    }

    /// Pins a correction of `wrong` issued by `institution`.
    pub fn label(
        &mut self,
        patient: usize,
        institution: usize,
        wrong: TxId,
        corrected: &[u8],
    ) -> Result<TxId, NodeError> {
        let tx = node::label(
            &self.group_params,
            &self.chain,
            &mut self.patients[patient],
            &mut self.institutions[institution],
            wrong,
            corrected,
            self.chain.round(),
            1,
        )?;
        self.pin_record(tx)
    }

    /// Patient-mediated sharing of `records` from `source` to a recipient.
    pub fn share(
        &mut self,
        patient: usize,
        source: usize,
        recipient: usize,
        records: &[TxId],
    ) -> Result<usize, NodeError> {
        node::share(
            &self.chain,
            &mut self.patients[patient],
            &self.institutions[source],
            &mut self.recipients[recipient],
            records,
        )
    }

    pub fn history(&self, patient: usize) -> Result<Vec<HistoryEntry>, NodeError> {
        node::retrieve_history(&self.chain, &self.patients[patient].id())
    }

    /// Store lookups one history retrieval costs.
    pub fn history_reads(&self, patient: usize) -> u64 {
        self.chain.reset_reads();
        let _ = self.history(patient);
        self.chain.reads()
    }

    /// Everything published on chain, encoded.
    pub fn public_bytes(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = self
            .view
            .pinned()
            .map(|k| encode_block(&Block::Key(k.clone()), &self.group_params))
            .collect();
        for p in &self.patients {
            if let Some(mb) = self.chain.microblock(&p.id()) {
                out.push(encode_block(&Block::Micro(mb.clone()), &self.group_params));
            }
        }
        out
    }

    /// Names of every party that can read `plaintext`: `patient{i}`,
    /// `institution{i}`, `recipient{i}` or `chain`.
    pub fn holders(&self, plaintext: &[u8]) -> Vec<String> {
        let mut out = Vec::new();
        for (i, p) in self.patients.iter().enumerate() {
            if node::contains_plaintext(p.exposed(), plaintext) {
                out.push(format!("patient{i}"));
            }
        }
        for (i, inst) in self.institutions.iter().enumerate() {
            if node::contains_plaintext(inst.exposed(), plaintext) {
                out.push(format!("institution{i}"));
            }
        }
        for (i, r) in self.recipients.iter().enumerate() {
            if node::contains_plaintext(r.received.iter().map(Vec::as_slice), plaintext) {
                out.push(format!("recipient{i}"));
            }
        }
        let public = self.public_bytes();
        if node::contains_plaintext(public.iter().map(Vec::as_slice), plaintext) {
            out.push("chain".into());
        }
        self.chain.reset_reads();
        out
    }

    /// Grows the chain to `length` keyblocks, each registering a filler
    /// patient who then uploads one record.
    pub fn grow_to(&mut self, length: u64, institution: usize) -> Result<(), NodeError> {
        while self.chain_length() < length {
            let n = self.patients.len();
            let p = self.register(institution, &format!("filler-{n}"))?;
            self.upload(p, institution, format!("filler record {n}").as_bytes())?;
        }
        Ok(())
    }
}
