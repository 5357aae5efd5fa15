//! The scenario simulator.
//!
//! Time advances in integer steps. Keyblock timing comes from its own random
//! stream and patient traffic from another, so changing the consensus group
//! size or the scheduler cannot shift who mines what or which patients show
//! up. Network delays are a hash of the message id.
//!
//! A round starts when a keyblock is pinned. Each miner draws the number of
//! hash attempts it needs; its find time is that count over its hash rate.
//! The earliest publishing miner wins, runs a real nonce search so the block
//! passes the puzzle check, and the consensus group pins the block after a
//! fixed decision latency. Registrations in the block create patient
//! microblocks. Medical and label transactions queue at the institution that
//! received them and are pinned in scheduler batches whose duration grows
//! with the quorum size.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use spchain_core::consensus::{
    compute_r2, keyblock_rewards, microblock_rewards, pin, select_group, ChunkStats, ConsensusGroup, FeeSchedule,
    MiningScore, PinOutcome, PinnedShare, ReputationError, ReputationParams, Scheduler, Vote, UNIT,
};
use spchain_core::crypto::{content_hash, hash_parts, Hash32, PublicKey, ToyGroup};
use spchain_core::ledger::{
    institution_leaf, institution_root, sign_vote, ChainState, KeyBlock, MicroBlock, PinCertificate, Target,
    Transaction, TxId, TxType,
};
use spchain_core::mining::{search_nonce, ChainView, ForkChoice, RejectKind};
use spchain_core::node::{self, EmrRecord, InstitutionActor, PatientActor};
use spchain_core::{MinerId, Round};

use crate::config::{AdversaryKind, ConfigError, ScenarioConfig};
use crate::events::EventQueue;
use crate::metrics::{MetricsRecord, MinerSummary, ReputationRow, RunOutput, RunSummary};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated in round {round}: {what}")]
    Invariant { round: u64, what: String },
    #[error("no progress: gave up at step {step} in round {round}")]
    Stalled { round: u64, step: u64 },
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    Simulation::new(cfg.clone())?.run()
}

fn stream(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash_parts(&[label.as_bytes(), &seed.to_be_bytes()]).0)
}

fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let h = hash_parts(&[label.as_bytes(), &seed.to_be_bytes(), &index.to_be_bytes()]);
    u64::from_be_bytes(h.0[..8].try_into().expect("8 bytes"))
}

fn hash_u64(h: &Hash32) -> u64 {
    u64::from_be_bytes(h.0[..8].try_into().expect("8 bytes"))
}

/// `floor(rate)` arrivals plus one more with probability `frac(rate)`.
fn arrivals(rng: &mut ChaCha20Rng, rate: f64) -> usize {
    let whole = rate.floor();
    let extra = usize::from(rng.gen::<f64>() < rate - whole);
    whole as usize + extra
}

/// Attempts until the first success when each succeeds with `2^-bits`.
pub fn geometric_attempts(rng: &mut impl Rng, bits: u32) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    if bits == 0 {
        return 1.0;
    }
    let q = (-(bits as f64)).exp2();
    (u.ln() / (-q).ln_1p()).ceil().max(1.0)
}

/// Encoded size of a typical medical transaction carrying `record_bytes`.
pub fn record_tx_size(record_bytes: usize) -> usize {
    let group = ToyGroup::default_group();
    let mut patient = PatientActor::setup(1);
    let mut inst = InstitutionActor::setup(MinerId(0), 1, &group);
    patient.confirm_registration();
    let record = EmrRecord {
        plaintext: vec![0; record_bytes],
        institution: inst.id(),
        patient: patient.id(),
        round: 0,
    };
    node::upload(&group, &mut patient, &mut inst, &record, UNIT)
        .expect("sample upload")
        .encode(&group)
        .len()
}

/// Encoded size of a register transaction.
pub fn register_tx_size() -> usize {
    let group = ToyGroup::default_group();
    let patient = PatientActor::setup(1);
    let inst = InstitutionActor::setup(MinerId(0), 1, &group);
    node::register(&group, &patient, &inst, "sample", UNIT)
        .expect("sample register")
        .encode(&group)
        .len()
}

struct MinerState {
    id: MinerId,
    base_power: f64,
    power: f64,
    active: bool,
    serves_patients: bool,
    honest: bool,
    r1: f64,
    r2: f64,
    keyblocks: u64,
    keyblock_reward: u64,
    total_reward: u64,
    rounds_in_group: u64,
    first_in_group: Option<u64>,
    registers_per_round: Vec<u64>,
    records_per_round: Vec<u64>,
}

impl MinerState {
    fn reputation(&self) -> f64 {
        (self.r1 + self.r2) / 2.0
    }
}

struct PatientSim {
    actor: PatientActor,
    home: usize,
    zombie: bool,
    records_left: usize,
    /// Pinned record transactions with the institution that received each.
    pinned: Vec<(TxId, usize)>,
}

struct PendingRecord {
    tx: Transaction,
    patient: usize,
    receiver: usize,
    arrived_round: Round,
}

enum Event {
    BatchDone(ConsensusGroup, Vec<(MinerId, PendingRecord)>),
    KeyblockDecision,
    DeliverRecord(PendingRecord),
    DeliverRegister(Transaction, usize),
}

const RANK_BATCH: u8 = 0;
const RANK_DECISION: u8 = 1;
const RANK_DELIVERY: u8 = 2;

/// A keyblock waiting for its group decision.
struct Candidate {
    block: KeyBlock,
    patients: Vec<usize>,
}

/// Keyblocks mined but not yet published by a withholding miner.
#[derive(Default)]
struct PrivateChain {
    blocks: Vec<KeyBlock>,
    since: Option<Round>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    group_params: ToyGroup,
    fees: FeeSchedule,
    rep_params: ReputationParams,
    view: ChainView,
    chain: ChainState,
    institutions: Vec<InstitutionActor>,
    miners: Vec<MinerState>,
    patients: Vec<PatientSim>,
    patients_spawned: usize,
    mining_rng: ChaCha20Rng,
    traffic_rng: ChaCha20Rng,
    tie_rng: ChaCha20Rng,
    events: EventQueue<Event>,
    now: u64,
    round: Round,
    group: ConsensusGroup,
    reputations: BTreeMap<MinerId, f64>,
    pinned_share: PinnedShare,
    register_pool: VecDeque<(Transaction, usize)>,
    register_tx_bytes: BTreeMap<TxId, usize>,
    scheduler: Scheduler<PendingRecord>,
    batch_in_flight: bool,
    found: Option<(u64, usize)>,
    candidate: Option<Candidate>,
    private_chain: PrivateChain,
    total_microblocks: u64,
    total_records: u64,
    summary: RunSummary,
    records: Vec<MetricsRecord>,
    reputation_rows: Vec<ReputationRow>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let group_params = ToyGroup::default_group();
        let shares = cfg.power_shares();
        let mut chain = ChainState::new(group_params);
        let institutions: Vec<InstitutionActor> = (0..cfg.miners)
            .map(|i| {
                InstitutionActor::setup(
                    MinerId(i as u32),
                    derive_seed(cfg.seed, "institution", i as u64),
                    &group_params,
                )
            })
            .collect();
        for inst in &institutions {
            chain.add_institution(inst.id(), inst.hash_key().clone());
        }
        let late_joiner =
            (cfg.adversary == AdversaryKind::Flash && cfg.flash_join_round > 0).then_some(cfg.adversary_miner);
        let miners = (0..cfg.miners)
            .map(|i| MinerState {
                id: MinerId(i as u32),
                base_power: shares[i],
                power: shares[i],
                active: late_joiner != Some(i),
                serves_patients: late_joiner != Some(i),
                honest: true,
                r1: 0.0,
                r2: 0.0,
                keyblocks: 0,
                keyblock_reward: 0,
                total_reward: 0,
                rounds_in_group: 0,
                first_in_group: None,
                registers_per_round: Vec::new(),
                records_per_round: Vec::new(),
            })
            .collect();
        let batch_cap = if cfg.batch_cap > 0 {
            cfg.batch_cap
        } else {
            (cfg.block_size_bytes / record_tx_size(cfg.record_bytes)).max(1)
        };
        let seed = cfg.seed;
        let mut sim = Self {
            fees: FeeSchedule {
                mining_reward: cfg.mining_reward * UNIT,
                microblock_reward: cfg.microblock_reward * UNIT,
                creator_share_percent: cfg.creator_share_percent,
            },
            rep_params: ReputationParams {
                a: cfg.rep_a,
                lambda: cfg.rep_lambda,
            },
            view: ChainView::new(group_params, Target::from_leading_zero_bits(cfg.target_bits)),
            group_params,
            chain,
            institutions,
            miners,
            patients: Vec::new(),
            patients_spawned: 0,
            mining_rng: stream(seed, "mining"),
            traffic_rng: stream(seed, "traffic"),
            tie_rng: stream(seed, "ties"),
            events: EventQueue::default(),
            now: 0,
            round: 0,
            group: ConsensusGroup::new(0, Vec::new()),
            reputations: BTreeMap::new(),
            pinned_share: PinnedShare::default(),
            register_pool: VecDeque::new(),
            register_tx_bytes: BTreeMap::new(),
            scheduler: Scheduler::new(batch_cap),
            batch_in_flight: false,
            found: None,
            candidate: None,
            private_chain: PrivateChain::default(),
            total_microblocks: 0,
            total_records: 0,
            summary: RunSummary::default(),
            records: Vec::new(),
            reputation_rows: Vec::new(),
            cfg,
        };
        sim.apply_powers();
        Ok(sim)
    }

    fn adversary_is(&self, i: usize, kind: AdversaryKind) -> bool {
        self.cfg.adversary == kind && self.cfg.adversary_miner == i
    }

    fn invariant(&self, what: impl Into<String>) -> SimError {
        SimError::Invariant {
            round: self.round,
            what: what.into(),
        }
    }

    /// Effective hash power. A flash attacker takes `flash_power` of the
    /// total once it joins; incumbents share the rest pro rata.
    fn apply_powers(&mut self) {
        if self.cfg.adversary != AdversaryKind::Flash {
            return;
        }
        let a = self.cfg.adversary_miner;
        let incumbents: f64 = self
            .miners
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a)
            .map(|(_, m)| m.base_power)
            .sum();
        let joined = self.miners[a].active;
        let rest = if joined { 1.0 - self.cfg.flash_power } else { 1.0 };
        for (i, m) in self.miners.iter_mut().enumerate() {
            m.power = if i == a {
                if joined {
                    self.cfg.flash_power
                } else {
                    0.0
                }
            } else if incumbents > 0.0 {
                m.base_power / incumbents * rest
            } else {
                0.0
            };
        }
    }

    fn keys(&self) -> BTreeMap<MinerId, PublicKey> {
        self.institutions
            .iter()
            .map(|i| (i.id(), i.keypair().public()))
            .collect()
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        self.select_group()?;
        self.start_mining();
        while self.round < self.cfg.rounds {
            if self.now > self.cfg.max_steps {
                return Err(SimError::Stalled {
                    round: self.round,
                    step: self.now,
                });
            }
            self.process_events()?;
            if self.round >= self.cfg.rounds {
                break;
            }
            self.generate_traffic();
            if self.now.is_multiple_of(self.cfg.delta) && !self.batch_in_flight {
                self.start_batch();
            }
            if let Some((at, winner)) = self.found {
                if at == self.now {
                    self.keyblock_found(winner)?;
                }
            }
            self.now += 1;
        }
        self.finish()
    }

    fn process_events(&mut self) -> Result<(), SimError> {
        let mut registers = Vec::new();
        let mut records = Vec::new();
        while let Some(ev) = self.events.pop_due(self.now) {
            match ev {
                Event::BatchDone(group, batch) => self.finish_batch(&group, batch)?,
                Event::KeyblockDecision => self.decide_keyblock()?,
                Event::DeliverRecord(r) => records.push(r),
                Event::DeliverRegister(tx, p) => registers.push((tx, p)),
            }
        }
        // Messages delivered in the same step are queued in transaction-id
        // order, so their delivery order cannot affect what gets pinned.
        registers.sort_by_key(|(tx, _)| tx.id());
        records.sort_by_key(|r: &PendingRecord| r.tx.id());
        for (tx, p) in registers {
            self.register_tx_bytes
                .insert(tx.id(), tx.encode(&self.group_params).len());
            self.register_pool.push_back((tx, p));
        }
        for mut r in records {
            r.arrived_round = self.round;
            self.scheduler.push(MinerId(r.receiver as u32), r);
        }
        Ok(())
    }

    fn schedule(&mut self, time: u64, rank: u8, event: Event) {
        if self.cfg.shuffle_ties {
            let seq = self.tie_rng.next_u64();
            self.events.push_with_seq(time, rank, seq, event);
        } else {
            self.events.push(time, rank, event);
        }
    }

    fn net_delay(&self, id: &TxId) -> u64 {
        let span = self.cfg.net_delay_max - self.cfg.net_delay_min + 1;
        let h = hash_parts(&[b"delay", &self.cfg.seed.to_be_bytes(), id.as_bytes()]);
        self.cfg.net_delay_min + hash_u64(&h) % span
    }

    // ---- traffic -------------------------------------------------------

    fn generate_traffic(&mut self) {
        if self.now == 0 && self.cfg.adversary == AdversaryKind::Fraud {
            for _ in 0..self.cfg.fraud_zombies {
                self.spawn_patient(self.cfg.adversary_miner, true);
            }
        }
        for _ in 0..arrivals(&mut self.traffic_rng, self.cfg.register_rate) {
            if self.patients_spawned >= self.cfg.patients {
                break;
            }
            let serving: Vec<usize> = (0..self.miners.len())
                .filter(|&i| self.miners[i].serves_patients)
                .collect();
            let home = serving[self.traffic_rng.gen_range(0..serving.len())];
            self.spawn_patient(home, false);
        }
        for _ in 0..arrivals(&mut self.traffic_rng, self.cfg.record_rate) {
            self.generate_record();
        }
        for p in 0..self.patients.len() {
            let z = &self.patients[p];
            if z.zombie && z.actor.is_registered() && z.records_left > 0 {
                self.patients[p].records_left -= 1;
                let bytes = node::synthetic_record(&mut self.traffic_rng, self.cfg.record_bytes);
                let home = self.patients[p].home;
                self.submit_record(p, home, bytes, None);
            }
        }
    }

    fn spawn_patient(&mut self, home: usize, zombie: bool) {
        let idx = self.patients.len();
        let actor = PatientActor::setup(derive_seed(self.cfg.seed, "patient", idx as u64));
        let identity = format!("patient/{}/{idx}", self.cfg.seed);
        let fee = self.cfg.register_fee * UNIT;
        let tx = node::register(&self.group_params, &actor, &self.institutions[home], &identity, fee)
            .expect("a fresh patient can always register");
        if zombie {
            self.summary.fees_paid_by_zombies += fee;
        } else {
            self.patients_spawned += 1;
        }
        self.patients.push(PatientSim {
            actor,
            home,
            zombie,
            records_left: if zombie { self.cfg.fraud_zombie_records } else { 0 },
            pinned: Vec::new(),
        });
        let at = self.now + self.net_delay(&tx.id());
        self.schedule(at, RANK_DELIVERY, Event::DeliverRegister(tx, idx));
    }

    fn generate_record(&mut self) {
        // The same draws happen whatever the chain state, which keeps the
        // traffic stream aligned across runs that differ only in consensus.
        let pick = self.traffic_rng.gen::<u64>();
        let visit = self.traffic_rng.gen::<f64>();
        let other = self.traffic_rng.gen::<u64>();
        let label = self.traffic_rng.gen::<f64>();
        let bytes = node::synthetic_record(&mut self.traffic_rng, self.cfg.record_bytes);

        let eligible: Vec<usize> = (0..self.patients.len())
            .filter(|&p| self.patients[p].actor.is_registered() && !self.patients[p].zombie)
            .collect();
        if eligible.is_empty() {
            return;
        }
        let p = eligible[(pick % eligible.len() as u64) as usize];
        let home = self.patients[p].home;
        let others: Vec<usize> = (0..self.miners.len())
            .filter(|&i| i != home && self.miners[i].serves_patients)
            .collect();
        let inst = if visit < self.cfg.visit_other_fraction && !others.is_empty() {
            others[(other % others.len() as u64) as usize]
        } else {
            home
        };
        let target = (label < self.cfg.label_fraction)
            .then(|| {
                self.patients[p]
                    .pinned
                    .iter()
                    .rev()
                    .find(|(_, i)| *i == inst)
                    .map(|(id, _)| *id)
            })
            .flatten();
        self.submit_record(p, inst, bytes, target);
    }

    fn submit_record(&mut self, p: usize, inst: usize, bytes: Vec<u8>, label_target: Option<TxId>) {
        let fee = self.cfg.record_fee * UNIT;
        let patient = &mut self.patients[p].actor;
        let institution = &mut self.institutions[inst];
        let built = match label_target {
            Some(wrong) => node::label(
                &self.group_params,
                &self.chain,
                patient,
                institution,
                wrong,
                &bytes,
                self.round,
                fee,
            ),
            None => {
                let record = EmrRecord {
                    plaintext: bytes,
                    institution: institution.id(),
                    patient: patient.id(),
                    round: self.round,
                };
                node::upload(&self.group_params, patient, institution, &record, fee)
            }
        };
        let Ok(tx) = built else {
            return;
        };
        if self.patients[p].zombie {
            self.summary.fees_paid_by_zombies += fee;
        }
        let at = self.now + self.net_delay(&tx.id());
        let record = PendingRecord {
            tx,
            patient: p,
            receiver: inst,
            arrived_round: 0,
        };
        self.schedule(at, RANK_DELIVERY, Event::DeliverRecord(record));
    }

    // ---- keyblocks -----------------------------------------------------

    fn start_mining(&mut self) {
        let rate = self.cfg.hashrate;
        let mut best: Option<(f64, usize)> = None;
        let mut withheld: Option<f64> = None;
        for i in 0..self.miners.len() {
            // Every miner draws, active or not, so the stream stays aligned.
            let attempts = geometric_attempts(&mut self.mining_rng, self.cfg.target_bits);
            let m = &self.miners[i];
            if !m.active || m.power <= 0.0 {
                continue;
            }
            let t = attempts / (m.power * rate);
            if self.adversary_is(i, AdversaryKind::Selfish) {
                withheld = Some(t);
            } else if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        self.found = best.map(|(t, i)| (self.now + (t.ceil() as u64).max(1), i));
        if let (Some(ts), Some((tb, _))) = (withheld, best) {
            if ts < tb {
                self.mine_private();
            }
        }
    }

    /// Runs the puzzle for `miner` on top of `prev` at `height`.
    fn solve(&self, miner: usize, prev: Hash32, height: u64, register_txs: Vec<Transaction>, salt: &[u8]) -> KeyBlock {
        let key = self.institutions[miner].keypair().public();
        let penu = self.view.penu_hash(height);
        let target = self.view.target();
        let start = hash_u64(&hash_parts(&[prev.as_bytes(), &key.0, salt]));
        let (nonce, _) = search_nonce(&prev, &penu, &key, &target, start, u64::MAX)
            .expect("a target with at most 32 zero bits is always met");
        KeyBlock {
            prev_keyblock_hash: prev,
            penu_microblock_hash: penu,
            nonce,
            miner: MinerId(miner as u32),
            miner_key: key,
            register_txs,
            target,
            height,
            pin_cert: None,
        }
    }

    fn mine_private(&mut self) {
        let a = self.cfg.adversary_miner;
        let (height, tip) = self.view.tip();
        let block = self.solve(a, tip, height + 1, Vec::new(), b"private");
        self.private_chain.since.get_or_insert(self.round);
        self.private_chain.blocks.push(block);
    }

    /// Publishes a keyblock to every node's fork choice. A block that
    /// conflicts with the pinned chain exposes its miner as dishonest.
    fn publish_rejected(&mut self, block: KeyBlock) -> Result<(), SimError> {
        match self.view.fork_choice(&block) {
            ForkChoice::Reject(RejectKind::ConflictsWithPinned) => {
                self.summary.rejected_keyblocks += 1;
                self.miners[block.miner.0 as usize].honest = false;
                Ok(())
            }
            other => Err(self.invariant(format!("conflicting keyblock not rejected: {other:?}"))),
        }
    }

    fn keyblock_found(&mut self, winner: usize) -> Result<(), SimError> {
        let mut budget = self.cfg.block_size_bytes;
        let mut txs = Vec::new();
        let mut patients = Vec::new();
        let mut seen = BTreeSet::new();
        while let Some((tx, p)) = self.register_pool.front() {
            let size = self.register_tx_bytes[&tx.id()];
            if size > budget {
                break;
            }
            let (tx, p) = (tx.clone(), *p);
            self.register_pool.pop_front();
            self.register_tx_bytes.remove(&tx.id());
            if self.chain.validate_tx(&tx).is_err() || !seen.insert(tx.sender) {
                continue;
            }
            budget -= size;
            txs.push(tx);
            patients.push(p);
        }
        let (height, tip) = self.view.tip();
        let block = self.solve(winner, tip, height + 1, txs, b"");
        if self.view.fork_choice(&block) != ForkChoice::Accept {
            return Err(self.invariant("honest keyblock rejected by fork choice"));
        }
        self.view.add_candidate(block.clone());
        self.candidate = Some(Candidate { block, patients });
        self.found = None;
        let at = self.now + self.cfg.keyblock_latency;
        self.schedule(at, RANK_DECISION, Event::KeyblockDecision);
        Ok(())
    }

    fn votes(&self, group: &ConsensusGroup, subject: &Hash32, refuse: impl Fn(MinerId) -> bool) -> Vec<Vote> {
        group
            .members()
            .iter()
            .filter(|m| !refuse(m.id))
            .map(|m| Vote {
                signer: m.id,
                signature: sign_vote(subject, group.epoch(), self.institutions[m.id.0 as usize].keypair()),
            })
            .collect()
    }

    fn certify(&self, group: &ConsensusGroup, subject: &Hash32) -> Result<PinCertificate, SimError> {
        let votes = self.votes(group, subject, |_| false);
        let mut audit = Vec::new();
        match pin(subject, &votes, group, &mut audit) {
            PinOutcome::Certified(c) => Ok(c),
            PinOutcome::Insufficient { .. } => Err(self.invariant("honest group failed to reach quorum")),
        }
    }

    fn decide_keyblock(&mut self) -> Result<(), SimError> {
        let Candidate { mut block, patients } = self
            .candidate
            .take()
            .ok_or_else(|| self.invariant("decision without candidate"))?;
        let group = self.group.clone();
        let hash = block.hash(&self.group_params);
        block.pin_cert = Some(self.certify(&group, &hash)?);
        let height = block.height;
        let winner = block.miner.0 as usize;
        let payouts = keyblock_rewards(&block, &self.fees).map_err(|e| self.invariant(e.to_string()))?;
        self.view
            .pin(block.clone())
            .map_err(|e| self.invariant(format!("pinning keyblock: {e}")))?;
        if self.view.pinned_hash_at(height) != Some(hash) {
            self.summary.pinned_conflicts += 1;
        }
        self.round = height;
        self.chain.set_round(height);
        self.pinned_share.record(block.miner);
        for (id, amount) in payouts {
            let m = &mut self.miners[id.0 as usize];
            m.keyblock_reward += amount;
            m.total_reward += amount;
        }
        self.miners[winner].keyblocks += 1;
        for m in &mut self.miners {
            m.registers_per_round.push(0);
            m.records_per_round.push(0);
        }

        let mut prev = hash;
        let mut tail = None;
        for (tx, p) in block.register_txs.iter().zip(patients) {
            self.chain
                .apply_register(tx, height)
                .map_err(|e| self.invariant(format!("applying register: {e}")))?;
            let receiver = tx.payload.receiver();
            let mb = self.create_microblock(&group, tx, receiver, prev)?;
            prev = mb.header_hash(&self.group_params);
            tail = Some(prev);
            self.chain
                .insert_microblock(mb)
                .map_err(|e| self.invariant(format!("inserting microblock: {e}")))?;
            self.total_microblocks += 1;
            self.summary.pinned_registers += 1;
            *self.miners[receiver.0 as usize]
                .registers_per_round
                .last_mut()
                .expect("pushed") += 1;
            self.patients[p].actor.confirm_registration();
        }
        if let Some(t) = tail {
            self.view.set_round_tail(height, t);
        }

        self.adversary_actions()?;
        self.update_reputation()?;
        self.select_group()?;
        self.emit_round();
        self.start_mining();
        Ok(())
    }

    fn create_microblock(
        &self,
        group: &ConsensusGroup,
        register: &Transaction,
        receiver: MinerId,
        prev: Hash32,
    ) -> Result<MicroBlock, SimError> {
        let inst = &self.institutions[receiver.0 as usize];
        let leaf = institution_leaf(&self.group_params, receiver, &inst.keypair().public(), inst.hash_key());
        let p = self.group_params.order();
        let r = hash_u64(&content_hash(register.id().as_bytes())) % (p - 1) + 1;
        let root = institution_root(&self.group_params, &[leaf], inst.hash_key(), r)
            .map_err(|e| self.invariant(format!("institution root: {e}")))?;
        let creator = if group.contains(receiver) {
            receiver
        } else {
            group.leader().id
        };
        let mut mb = MicroBlock::new(register.sender, root, creator, self.round, prev);
        let header = mb.header_hash(&self.group_params);
        mb.creation_cert = Some(self.certify(group, &header)?);
        Ok(mb)
    }

    fn adversary_actions(&mut self) -> Result<(), SimError> {
        let a = self.cfg.adversary_miner;
        match self.cfg.adversary {
            AdversaryKind::Selfish => {
                let due = self
                    .private_chain
                    .since
                    .is_some_and(|s| self.round >= s + self.cfg.selfish_withhold);
                if due {
                    self.private_chain.since = None;
                    for block in std::mem::take(&mut self.private_chain.blocks) {
                        self.publish_rejected(block)?;
                    }
                }
            }
            AdversaryKind::Flash => {
                if !self.miners[a].active && self.round >= self.cfg.flash_join_round {
                    self.miners[a].active = true;
                    self.apply_powers();
                }
                if self.cfg.flash_misbehave_round > 0
                    && self.round == self.cfg.flash_misbehave_round
                    && self.miners[a].active
                {
                    // A second block at the pinned tip height.
                    let (height, _) = self.view.tip();
                    let parent = self.view.pinned_hash_at(height - 1).expect("pinned parent");
                    let block = self.solve(a, parent, height, Vec::new(), b"fork");
                    self.publish_rejected(block)?;
                }
            }
            AdversaryKind::Inhibition => self.institutions[a].set_refusing(true),
            AdversaryKind::None | AdversaryKind::Fraud => {}
        }
        Ok(())
    }

    fn chunk_stats(&self, m: &MinerState) -> ChunkStats {
        let c = self.cfg.chunk_size as usize;
        let l = self.round as usize / c;
        let sum = |v: &[u64], i: usize| v[i * c..(i + 1) * c].iter().sum::<u64>();
        ChunkStats {
            registers: (0..l).map(|i| sum(&m.registers_per_round, i)).collect(),
            records: (0..l).map(|i| sum(&m.records_per_round, i)).collect(),
            chunk_size: self.cfg.chunk_size,
            chain_length: self.round,
            total_microblocks: self.total_microblocks,
            total_records: self.total_records,
        }
    }

    fn update_reputation(&mut self) -> Result<(), SimError> {
        for i in 0..self.miners.len() {
            let (r1, r2) = if self.miners[i].active {
                let m = &self.miners[i];
                let r1 = self.pinned_share.r1(m.id, m.honest);
                let r2 = match compute_r2(&self.chunk_stats(m), m.honest, self.rep_params) {
                    Ok(v) => v,
                    Err(ReputationError::InsufficientHistory) => 0.0,
                    Err(e) => return Err(self.invariant(format!("reputation: {e}"))),
                };
                (r1, r2)
            } else {
                (0.0, 0.0)
            };
            let m = &mut self.miners[i];
            m.r1 = r1;
            m.r2 = r2;
            self.reputation_rows.push(ReputationRow {
                round: self.round,
                miner: m.id.0,
                r1,
                r2,
                combined: m.reputation(),
            });
        }
        Ok(())
    }

    fn select_group(&mut self) -> Result<(), SimError> {
        self.reputations = self
            .miners
            .iter()
            .filter(|m| m.active)
            .map(|m| (m.id, m.reputation()))
            .collect();
        self.group = select_group(self.round, &self.reputations, &self.keys(), self.cfg.group_size)
            .map_err(|e| SimError::Config(ConfigError::Invalid(e.to_string())))?;
        for member in self.group.members() {
            let m = &mut self.miners[member.id.0 as usize];
            m.rounds_in_group += 1;
            m.first_in_group.get_or_insert(self.round);
        }
        Ok(())
    }

    fn seconds(&self) -> f64 {
        self.now as f64 / self.cfg.steps_per_second as f64
    }

    fn tps(&self, count: u64) -> f64 {
        let s = self.seconds();
        if s > 0.0 {
            count as f64 / s
        } else {
            0.0
        }
    }

    fn emit_round(&mut self) {
        let adversary_in_group =
            self.cfg.adversary != AdversaryKind::None && self.group.contains(MinerId(self.cfg.adversary_miner as u32));
        self.records.push(MetricsRecord {
            round: self.round,
            step: self.now,
            keyblock_tps: self.tps(self.summary.pinned_registers),
            microblock_tps: self.tps(self.summary.pinned_records),
            pinned_registers: self.summary.pinned_registers,
            pinned_records: self.summary.pinned_records,
            pinned_conflicts: self.summary.pinned_conflicts,
            stalled_batches: self.summary.stalled_batches,
            adversary_in_group,
            group: self.group.members().iter().map(|m| m.id.0).collect(),
        });
    }

    // ---- record batches ------------------------------------------------

    fn start_batch(&mut self) {
        if self.scheduler.total_pending() == 0 {
            return;
        }
        let waiting: BTreeSet<MinerId> = (0..self.miners.len())
            .map(|i| MinerId(i as u32))
            .filter(|id| self.scheduler.pending(*id) > 0)
            .collect();
        let batch = self.scheduler.schedule_batch(&self.reputations);
        let served: BTreeSet<MinerId> = batch.iter().map(|(id, _)| *id).collect();
        if !waiting.is_subset(&served) {
            self.summary.starved_batches += 1;
        }
        let k = self.group.quorum_count() as u64;
        let duration = self.cfg.batch_latency + (batch.len() as u64 * k).div_ceil(self.cfg.verify_rate);
        self.batch_in_flight = true;
        let group = self.group.clone();
        self.schedule(self.now + duration.max(1), RANK_BATCH, Event::BatchDone(group, batch));
    }

    fn finish_batch(&mut self, group: &ConsensusGroup, batch: Vec<(MinerId, PendingRecord)>) -> Result<(), SimError> {
        self.batch_in_flight = false;
        let inhibitor =
            (self.cfg.adversary == AdversaryKind::Inhibition).then_some(MinerId(self.cfg.adversary_miner as u32));
        let mut stalled = Vec::new();
        for (inst, rec) in batch {
            if self.chain.validate_tx(&rec.tx).is_err() {
                continue;
            }
            let id = rec.tx.id();
            let receiver = rec.tx.payload.receiver();
            let votes = self.votes(group, &id, |m| Some(m) == inhibitor && receiver != m);
            let mut audit = Vec::new();
            let PinOutcome::Certified(cert) = pin(&id, &votes, group, &mut audit) else {
                stalled.push((inst, rec));
                continue;
            };
            self.chain
                .append_pinned(rec.tx, cert, group)
                .map_err(|e| self.invariant(format!("appending pinned record: {e}")))?;
            self.total_records += 1;
            self.summary.pinned_records += 1;
            *self.miners[rec.receiver].records_per_round.last_mut().unwrap_or(&mut 0) += 1;
            self.patients[rec.patient].pinned.push((id, rec.receiver));
            if Some(inst) != inhibitor {
                let latency = self.round - rec.arrived_round;
                self.summary.max_victim_latency_rounds = self.summary.max_victim_latency_rounds.max(latency);
            }
        }
        if !stalled.is_empty() {
            self.summary.stalled_batches += 1;
            self.summary.stalled_txs += stalled.len() as u64;
            for (inst, rec) in stalled {
                self.scheduler.push(inst, rec);
            }
        }
        Ok(())
    }

    // ---- wrap-up -------------------------------------------------------

    fn histories_complete(&self) -> bool {
        self.patients.iter().filter(|p| p.actor.is_registered()).all(|p| {
            self.chain
                .history(&p.actor.id())
                .is_ok_and(|h| h.len() == p.pinned.len() && h.iter().zip(&p.pinned).all(|(e, (id, _))| e.tx_id == *id))
        })
    }

    /// Digest of everything pinned: keyblock hashes by height, then each
    /// registered patient's microblock transaction ids in patient order.
    fn ledger_digest(&self) -> Hash32 {
        let mut bytes = Vec::new();
        for k in self.view.pinned() {
            bytes.extend_from_slice(k.hash(&self.group_params).as_bytes());
        }
        for p in &self.patients {
            if let Some(mb) = self.chain.microblock(&p.actor.id()) {
                bytes.extend_from_slice(&p.actor.id().0);
                for e in mb.entries() {
                    bytes.extend_from_slice(e.tx.id().as_bytes());
                }
            }
        }
        content_hash(&bytes)
    }

    fn finish(mut self) -> Result<RunOutput, SimError> {
        for p in self.patients.iter().filter(|p| p.actor.is_registered()) {
            let mb = self
                .chain
                .microblock(&p.actor.id())
                .ok_or_else(|| self.invariant("registered patient without microblock"))?;
            if mb.entries().iter().any(|e| e.tx.tx_type() == TxType::Register) {
                return Err(self.invariant("register transaction inside a microblock"));
            }
            let payouts = microblock_rewards(mb, &self.fees).map_err(|e| self.invariant(e.to_string()))?;
            for (id, amount) in payouts {
                self.miners[id.0 as usize].total_reward += amount;
            }
        }
        if self.summary.pinned_conflicts > 0 {
            return Err(self.invariant("conflicting blocks pinned"));
        }
        self.summary.histories_complete = self.histories_complete();
        self.summary.ledger_digest = self.ledger_digest().to_hex();
        self.summary.rounds = self.round;
        self.summary.steps = self.now;
        self.summary.seconds = self.seconds();
        self.summary.keyblock_tps = self.tps(self.summary.pinned_registers);
        self.summary.microblock_tps = self.tps(self.summary.pinned_records);
        self.summary.miners = self
            .miners
            .iter()
            .map(|m| MinerSummary {
                miner: m.id.0,
                power: m.power,
                honest: m.honest,
                keyblocks: m.keyblocks,
                keyblock_reward: m.keyblock_reward,
                total_reward: m.total_reward,
                final_reputation: m.reputation(),
                rounds_in_group: m.rounds_in_group,
                first_round_in_group: m.first_in_group,
            })
            .collect();
        Ok(RunOutput {
            records: self.records,
            reputation: self.reputation_rows,
            summary: self.summary,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    #[test]
    fn geometric_mean_matches_inverse_probability() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| geometric_attempts(&mut rng, 6)).sum::<f64>() / n as f64;
        assert!((mean - 64.0).abs() < 3.0, "mean {mean}");
        assert_eq!(geometric_attempts(&mut rng, 0), 1.0);
    }

    #[test]
    fn small_run_pins_everything_it_should() {
        let cfg = ScenarioConfig {
            rounds: 12,
            patients: 10,
            register_rate: 0.5,
            record_rate: 0.5,
            record_bytes: 128,
            ..ScenarioConfig::default()
        };
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.records.len(), 12);
        assert_eq!(out.summary.pinned_conflicts, 0);
        assert!(out.summary.histories_complete);
        assert!(out.summary.pinned_registers > 0);
        assert!(out.summary.pinned_records > 0);
        let keyblocks: u64 = out.summary.miners.iter().map(|m| m.keyblocks).sum();
        assert_eq!(keyblocks, 12);
    }

    #[test]
    fn invalid_config_fails_before_running() {
        let cfg = ScenarioConfig {
            group_size: 9,
            ..ScenarioConfig::default()
        };
        assert!(matches!(run_scenario(&cfg), Err(SimError::Config(_))));
    }
}
