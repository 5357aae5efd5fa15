//! Pinning certificates for keyblocks, microblocks and transactions.

use thiserror::Error;

use super::codec::{DecodeError, Reader, Writer};
use crate::consensus::ConsensusGroup;
use crate::crypto::{sign, verify_sig, Hash32, Keypair, Signature};
use crate::MinerId;

const VOTE_DOMAIN: &[u8] = b"spchain/pin/v1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinSignature {
    pub signer: MinerId,
    /// Signer reputation weight frozen at epoch start.
    pub weight: f64,
    pub signature: Signature,
}

/// Certificate that the consensus group of `epoch` agreed on `subject`.
#[derive(Clone, Debug, PartialEq)]
pub struct PinCertificate {
    pub subject: Hash32,
    pub epoch: u64,
    pub group_size: u32,
    pub group_weight: f64,
    pub signers: Vec<PinSignature>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PinError {
    #[error("certificate is for a different subject")]
    SubjectMismatch,
    #[error("certificate epoch {cert} does not match group epoch {group}")]
    EpochMismatch { cert: u64, group: u64 },
    #[error("certificate group totals do not match the group")]
    GroupMismatch,
    #[error("signer {0} is not a group member")]
    UnknownSigner(MinerId),
    #[error("signer {0} claims a weight different from the group's")]
    WeightMismatch(MinerId),
    #[error("duplicate signer {0}")]
    DuplicateSigner(MinerId),
    #[error("bad signature from {0}")]
    BadSignature(MinerId),
    #[error("insufficient quorum: {count} signers, weight {weight:.4} of {total:.4}")]
    Insufficient { count: usize, weight: f64, total: f64 },
}

/// Message a group member signs to vote for `subject` in `epoch`.
pub fn vote_message(subject: &Hash32, epoch: u64) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(VOTE_DOMAIN).hash(subject).u64(epoch);
    w.finish()
}

pub fn sign_vote(subject: &Hash32, epoch: u64, key: &Keypair) -> Signature {
    sign(&vote_message(subject, epoch), key)
}

/// `count >= ceil(2X/3)` and `weight > 2/3 · total`.
pub fn quorum_met(count: usize, weight: f64, group_size: usize, total_weight: f64) -> bool {
    count * 3 >= group_size * 2 && 3.0 * weight > 2.0 * total_weight
}

impl PinCertificate {
    pub fn signer_weight(&self) -> f64 {
        self.signers.iter().map(|s| s.weight).sum()
    }

    /// Full check against the group that was active in the cert's epoch.
    pub fn verify(&self, subject: &Hash32, group: &ConsensusGroup) -> Result<(), PinError> {
        if self.subject != *subject {
            return Err(PinError::SubjectMismatch);
        }
        if self.epoch != group.epoch() {
            return Err(PinError::EpochMismatch {
                cert: self.epoch,
                group: group.epoch(),
            });
        }
        if self.group_size as usize != group.size() || self.group_weight != group.total_weight() {
            return Err(PinError::GroupMismatch);
        }
        let msg = vote_message(subject, self.epoch);
        let mut seen = Vec::with_capacity(self.signers.len());
        for s in &self.signers {
            let member = group.member(s.signer).ok_or(PinError::UnknownSigner(s.signer))?;
            if member.weight != s.weight {
                return Err(PinError::WeightMismatch(s.signer));
            }
            if seen.contains(&s.signer) {
                return Err(PinError::DuplicateSigner(s.signer));
            }
            seen.push(s.signer);
            if !verify_sig(&msg, &s.signature, &member.public_key) {
                return Err(PinError::BadSignature(s.signer));
            }
        }
        let weight = self.signer_weight();
        if !quorum_met(self.signers.len(), weight, group.size(), group.total_weight()) {
            return Err(PinError::Insufficient {
                count: self.signers.len(),
                weight,
                total: group.total_weight(),
            });
        }
        Ok(())
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.hash(&self.subject)
            .u64(self.epoch)
            .u32(self.group_size)
            .f64(self.group_weight)
            .u32(self.signers.len() as u32);
        for s in &self.signers {
            w.miner(s.signer).f64(s.weight).signature(&s.signature);
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let subject = r.hash()?;
        let epoch = r.u64()?;
        let group_size = r.u32()?;
        let group_weight = r.f64()?;
        let n = r.len(4 + 8 + 64)?;
        let mut signers = Vec::with_capacity(n);
        for _ in 0..n {
            signers.push(PinSignature {
                signer: r.miner()?,
                weight: r.f64()?,
                signature: r.signature()?,
            });
        }
        Ok(Self {
            subject,
            epoch,
            group_size,
            group_weight,
            signers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Member;

    fn group(weights: &[f64]) -> (ConsensusGroup, Vec<Keypair>) {
        let keys: Vec<Keypair> = (0..weights.len())
            .map(|i| Keypair::from_seed([i as u8 + 1; 32]))
            .collect();
        let members = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Member {
                id: MinerId(i as u32),
                weight: w,
                public_key: keys[i].public(),
            })
            .collect();
        (ConsensusGroup::new(3, members), keys)
    }

    fn cert(g: &ConsensusGroup, keys: &[Keypair], who: &[usize], subject: Hash32) -> PinCertificate {
        PinCertificate {
            subject,
            epoch: g.epoch(),
            group_size: g.size() as u32,
            group_weight: g.total_weight(),
            signers: who
                .iter()
                .map(|&i| PinSignature {
                    signer: MinerId(i as u32),
                    weight: g.member(MinerId(i as u32)).unwrap().weight,
                    signature: sign_vote(&subject, g.epoch(), &keys[i]),
                })
                .collect(),
        }
    }

    #[test]
    fn quorum_arithmetic() {
        assert!(quorum_met(3, 0.9, 4, 1.0));
        assert!(!quorum_met(2, 0.7, 4, 1.0));
        // Count is fine, weight is exactly 2/3: not strictly more.
        assert!(!quorum_met(2, 2.0, 3, 3.0));
        // ceil(8/3) = 3.
        assert!(!quorum_met(2, 0.99, 4, 1.0));
    }

    #[test]
    fn verify_accepts_valid_and_rejects_forgeries() {
        let (g, keys) = group(&[0.4, 0.3, 0.2, 0.1]);
        let subject = Hash32([9; 32]);
        let good = cert(&g, &keys, &[0, 1, 2], subject);
        assert_eq!(good.verify(&subject, &g), Ok(()));
        assert_eq!(good.verify(&Hash32([8; 32]), &g), Err(PinError::SubjectMismatch));

        let weak = cert(&g, &keys, &[1, 2, 3], subject);
        assert!(matches!(weak.verify(&subject, &g), Err(PinError::Insufficient { .. })));

        let mut inflated = cert(&g, &keys, &[1, 2, 3], subject);
        inflated.signers[0].weight = 0.8;
        assert_eq!(inflated.verify(&subject, &g), Err(PinError::WeightMismatch(MinerId(1))));

        let mut dup = cert(&g, &keys, &[0, 1], subject);
        dup.signers.push(dup.signers[0]);
        assert_eq!(dup.verify(&subject, &g), Err(PinError::DuplicateSigner(MinerId(0))));

        let mut forged = good.clone();
        forged.signers[2].signature = forged.signers[1].signature;
        assert_eq!(forged.verify(&subject, &g), Err(PinError::BadSignature(MinerId(2))));
    }

    #[test]
    fn encoding_round_trips() {
        let (g, keys) = group(&[0.5, 0.5, 0.25]);
        let c = cert(&g, &keys, &[0, 2], Hash32([1; 32]));
        let mut w = Writer::new();
        c.write(&mut w);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(PinCertificate::read(&mut r).unwrap(), c);
        r.finish().unwrap();
    }
}
