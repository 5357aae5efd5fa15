use crate::crypto::{verify_sig, Hash32, Signature};
use crate::ledger::{quorum_met, vote_message, PinCertificate, PinSignature};
use crate::MinerId;

use super::ConsensusGroup;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vote {
    pub signer: MinerId,
    pub signature: Signature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IgnoreReason {
    NotMember,
    BadSignature,
    Duplicate,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PinOutcome {
    Certified(PinCertificate),
    Insufficient { count: usize, weight: f64, total: f64 },
}

impl PinOutcome {
    pub fn certificate(self) -> Option<PinCertificate> {
        match self {
            PinOutcome::Certified(c) => Some(c),
            PinOutcome::Insufficient { .. } => None,
        }
    }
}

/// Aggregates votes into a certificate. Invalid votes are skipped and
/// appended to `audit`.
pub fn pin(
    subject: &Hash32,
    votes: &[Vote],
    group: &ConsensusGroup,
    audit: &mut Vec<(MinerId, IgnoreReason)>,
) -> PinOutcome {
    let msg = vote_message(subject, group.epoch());
    let mut signers: Vec<PinSignature> = Vec::with_capacity(votes.len());
    for v in votes {
        let Some(member) = group.member(v.signer) else {
            audit.push((v.signer, IgnoreReason::NotMember));
            continue;
        };
        if signers.iter().any(|s| s.signer == v.signer) {
            audit.push((v.signer, IgnoreReason::Duplicate));
            continue;
        }
        if !verify_sig(&msg, &v.signature, &member.public_key) {
            audit.push((v.signer, IgnoreReason::BadSignature));
            continue;
        }
        signers.push(PinSignature {
            signer: v.signer,
            weight: member.weight,
            signature: v.signature,
        });
    }
    let weight: f64 = signers.iter().map(|s| s.weight).sum();
    if !quorum_met(signers.len(), weight, group.size(), group.total_weight()) {
        return PinOutcome::Insufficient {
            count: signers.len(),
            weight,
            total: group.total_weight(),
        };
    }
    PinOutcome::Certified(PinCertificate {
        subject: *subject,
        epoch: group.epoch(),
        group_size: group.size() as u32,
        group_weight: group.total_weight(),
        signers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Member;
    use crate::crypto::Keypair;
    use crate::ledger::sign_vote;

    fn setup(weights: &[f64]) -> (ConsensusGroup, Vec<Keypair>) {
        let keys: Vec<_> = (0..weights.len())
            .map(|i| Keypair::from_seed([i as u8 + 9; 32]))
            .collect();
        let members = weights
            .iter()
            .enumerate()
            .map(|(i, &weight)| Member {
                id: MinerId(i as u32),
                weight,
                public_key: keys[i].public(),
            })
            .collect();
        (ConsensusGroup::new(0, members), keys)
    }

    fn votes(keys: &[Keypair], who: &[usize], subject: &Hash32) -> Vec<Vote> {
        who.iter()
            .map(|&i| Vote {
                signer: MinerId(i as u32),
                signature: sign_vote(subject, 0, &keys[i]),
            })
            .collect()
    }

    #[test]
    fn quorum_examples() {
        let (g, keys) = setup(&[0.4, 0.3, 0.2, 0.1]);
        let s = Hash32([5; 32]);
        let mut audit = Vec::new();

        let cert = pin(&s, &votes(&keys, &[0, 1, 2], &s), &g, &mut audit)
            .certificate()
            .unwrap();
        assert_eq!(cert.verify(&s, &g), Ok(()));

        match pin(&s, &votes(&keys, &[0, 1], &s), &g, &mut audit) {
            PinOutcome::Insufficient { count, weight, .. } => {
                assert_eq!(count, 2);
                assert!((weight - 0.7).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            pin(&s, &votes(&keys, &[0, 1, 2, 3], &s), &g, &mut audit),
            PinOutcome::Certified(_)
        ));
        assert!(audit.is_empty());
    }

    #[test]
    fn bad_votes_are_audited() {
        let (g, keys) = setup(&[0.25; 4]);
        let s = Hash32([1; 32]);
        let mut vs = votes(&keys, &[0, 1, 2], &s);
        vs.push(vs[0]);
        vs.push(Vote {
            signer: MinerId(77),
            signature: vs[0].signature,
        });
        vs.push(Vote {
            signer: MinerId(3),
            signature: vs[0].signature,
        });
        let mut audit = Vec::new();
        assert!(matches!(pin(&s, &vs, &g, &mut audit), PinOutcome::Certified(_)));
        assert_eq!(
            audit,
            vec![
                (MinerId(0), IgnoreReason::Duplicate),
                (MinerId(77), IgnoreReason::NotMember),
                (MinerId(3), IgnoreReason::BadSignature),
            ]
        );
    }
}
