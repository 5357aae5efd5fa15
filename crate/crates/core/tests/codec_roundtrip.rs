use proptest::prelude::*;

use spchain_core::consensus::{pin, ConsensusGroup, Member, PinOutcome, Vote};
use spchain_core::crypto::{Chameleon, Hash32, Keypair, ToyGroup};
use spchain_core::ledger::{
    append_pinned_tx, build_tx, decode_block, encode_block, sign_vote, Block, HashKeyT, KeyBlock, MicroBlock,
    PinCertificate, RecordRef, Target, Transaction, TxPayload,
};
use spchain_core::MinerId;

fn keypair(seed: u64, domain: u8) -> Keypair {
    let mut bytes = [domain; 32];
    bytes[..8].copy_from_slice(&seed.to_be_bytes());
    Keypair::from_seed(bytes)
}

struct Fixture {
    group_params: ToyGroup,
    members: Vec<Keypair>,
    group: ConsensusGroup,
    hk: HashKeyT,
}

fn fixture(weights: &[f64]) -> Fixture {
    let group_params = ToyGroup::default_group();
    let members: Vec<Keypair> = (0..weights.len()).map(|i| keypair(i as u64, 7)).collect();
    let group = ConsensusGroup::new(
        3,
        members
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (k, w))| Member {
                id: MinerId(i as u32),
                weight: *w,
                public_key: k.public(),
            })
            .collect(),
    );
    let ch = Chameleon::transparent(&group_params);
    let (hk, _) = ch.keys_from_parts(123_456_789, 987_654_321, b"crs".to_vec());
    Fixture {
        group_params,
        members,
        group,
        hk,
    }
}

impl Fixture {
    fn certify(&self, subject: &Hash32) -> PinCertificate {
        let votes: Vec<Vote> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, k)| Vote {
                signer: MinerId(i as u32),
                signature: sign_vote(subject, self.group.epoch(), k),
            })
            .collect();
        match pin(subject, &votes, &self.group, &mut Vec::new()) {
            PinOutcome::Certified(c) => c,
            other => panic!("{other:?}"),
        }
    }

    fn record(&self, message: u64, r: u64, pointer: &str, round: u64) -> RecordRef {
        let m = message % self.group_params.order();
        let r = r % (self.group_params.order() - 1) + 1;
        RecordRef {
            institution: MinerId(0),
            digest: Chameleon::transparent(&self.group_params).hash(&self.hk, m, r).unwrap(),
            pointer: pointer.to_string(),
            round,
        }
    }

    fn tx(&self, spec: &TxSpec, sender: &Keypair) -> Transaction {
        let payload = match spec.kind {
            0 => TxPayload::Register {
                identity_digest: Hash32(spec.bytes),
                institution: MinerId(spec.institution),
            },
            1 => TxPayload::Medical(self.record(spec.message, spec.r, &spec.pointer, spec.round)),
            _ => TxPayload::Label {
                target: Hash32(spec.bytes),
                record: self.record(spec.message, spec.r, &spec.pointer, spec.round),
            },
        };
        build_tx(&self.group_params, payload, spec.fee, sender, Some(&self.hk)).unwrap()
    }
}

#[derive(Clone, Debug)]
struct TxSpec {
    kind: u8,
    bytes: [u8; 32],
    institution: u32,
    message: u64,
    r: u64,
    pointer: String,
    round: u64,
    fee: u64,
}

fn tx_spec() -> impl Strategy<Value = TxSpec> {
    (
        0u8..3,
        prop::array::uniform32(1u8..),
        any::<u32>(),
        any::<u64>(),
        any::<u64>(),
        "[a-f0-9]{0,64}",
        0u64..1_000_000,
        any::<u64>(),
    )
        .prop_map(|(kind, bytes, institution, message, r, pointer, round, fee)| TxSpec {
            kind,
            bytes,
            institution,
            message,
            r,
            pointer,
            round,
            fee,
        })
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 1..6)
}

fn keyblock(f: &Fixture, specs: &[TxSpec], seed: u64, certified: bool) -> KeyBlock {
    let registers = specs
        .iter()
        .enumerate()
        .map(|(i, s)| f.tx(&TxSpec { kind: 0, ..s.clone() }, &keypair(seed + i as u64, 1)))
        .collect();
    let miner = keypair(seed, 2);
    let mut b = KeyBlock {
        prev_keyblock_hash: Hash32([seed as u8; 32]),
        penu_microblock_hash: Hash32([(seed >> 8) as u8; 32]),
        nonce: seed.rotate_left(17),
        miner: MinerId((seed % 1000) as u32),
        miner_key: miner.public(),
        register_txs: registers,
        target: Target::from_leading_zero_bits((seed % 40) as u32),
        height: seed % 10_000,
        pin_cert: None,
    };
    if certified {
        let h = b.hash(&f.group_params);
        b.pin_cert = Some(f.certify(&h));
    }
    b
}

fn microblock(f: &Fixture, specs: &[TxSpec], seed: u64) -> MicroBlock {
    let owner = keypair(seed, 3);
    let root = f.record(seed, seed ^ 0x5555, "", 0).digest;
    let mut mb = MicroBlock::new(owner.public(), root, MinerId(1), 0, Hash32([9; 32]));
    let header = mb.header_hash(&f.group_params);
    mb.creation_cert = Some(f.certify(&header));
    for s in specs {
        let spec = TxSpec {
            kind: 1 + s.kind % 2,
            ..s.clone()
        };
        let tx = f.tx(&spec, &owner);
        let cert = f.certify(&tx.id());
        mb = append_pinned_tx(&mb, tx, cert, &f.group).unwrap();
    }
    mb
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transactions_round_trip(spec in tx_spec(), seed in any::<u64>()) {
        let f = fixture(&[1.0]);
        let tx = f.tx(&spec, &keypair(seed, 4));
        let bytes = tx.encode(&f.group_params);
        let back = Transaction::decode(&bytes, &f.group_params).unwrap();
        prop_assert_eq!(back.id(), tx.id());
        prop_assert_eq!(back, tx);
    }

    #[test]
    fn blocks_round_trip(
        specs in prop::collection::vec(tx_spec(), 0..4),
        w in weights(),
        seed in any::<u64>(),
        certified in any::<bool>(),
    ) {
        let f = fixture(&w);
        for block in [Block::Key(keyblock(&f, &specs, seed, certified)), Block::Micro(microblock(&f, &specs, seed))] {
            let bytes = encode_block(&block, &f.group_params);
            let back = decode_block(&bytes, &f.group_params).unwrap();
            prop_assert_eq!(encode_block(&back, &f.group_params), bytes);
            prop_assert_eq!(back, block);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// A corrupted encoding either fails to decode or decodes to something
    /// whose canonical encoding is exactly the corrupted bytes.
    #[test]
    fn corrupted_bytes_never_alias(
        specs in prop::collection::vec(tx_spec(), 0..3),
        seed in any::<u64>(),
        position in any::<prop::sample::Index>(),
        flip in 1u8..,
        truncate in any::<bool>(),
    ) {
        let f = fixture(&[0.5, 0.5]);
        for block in [Block::Key(keyblock(&f, &specs, seed, true)), Block::Micro(microblock(&f, &specs, seed))] {
            let mut bytes = encode_block(&block, &f.group_params);
            let i = position.index(bytes.len());
            if truncate {
                bytes.truncate(i);
                prop_assert!(decode_block(&bytes, &f.group_params).is_err());
            } else {
                bytes[i] ^= flip;
                if let Ok(other) = decode_block(&bytes, &f.group_params) {
                    prop_assert_ne!(&other, &block);
                    prop_assert_eq!(encode_block(&other, &f.group_params), bytes);
                }
            }
        }
    }
}
