//! Key-exposure-free chameleon hash with trapdoor collisions.
//!
//! `h = r·h1 + m·h2` with witness `R = r·g`. Anyone can check
//! `e(h - m·h2, g2) == e(R, ĥ1)`; the holder of `x` (where `h1 = x·g`) can
//! open the same `h` to any other message by computing
//! `R' = x⁻¹·(h - m'·h2)`. The trapdoor itself never appears in a digest.
//!
//! Proofs go through [`ProofBackend`]. The only backend shipped is
//! [`TransparentProof`], which reveals `R` (and the bound message) in the
//! clear and verifies by the pairing equation directly. It keeps the
//! redaction semantics but not the witness-hiding property.

use rand::RngCore;
use thiserror::Error;

use super::group::{BilinearGroup, GroupError};
use super::hash::{content_hash, Hash32};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChameleonError {
    #[error("group order too small for chameleon hashing (need p >= 5)")]
    DegenerateGroup,
    #[error("security parameter must be positive")]
    InvalidSecurityParam,
    #[error("hash randomness must be non-zero")]
    ZeroRandomness,
    #[error("message is not reduced mod p")]
    MessageOutOfRange,
    #[error("invalid source digest")]
    InvalidSourceDigest,
    #[error("trapdoor does not match hash key")]
    TrapdoorMismatch,
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Public hash key `hk = (h1, ĥ1, h2, crs)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashKey<G: BilinearGroup> {
    pub h1: G::G1,
    pub h1_hat: G::G2,
    pub h2: G::G1,
    pub crs: Vec<u8>,
}

/// Trapdoor `tk = x`. Deliberately not `Debug`.
#[derive(Clone, PartialEq, Eq)]
pub struct Trapdoor<G: BilinearGroup> {
    x: G::Scalar,
}

impl<G: BilinearGroup> Trapdoor<G> {
    pub fn secret(&self) -> G::Scalar {
        self.x
    }
}

/// Chameleon digest `h` with its proof `π` and the message it opens to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChameleonDigest<G: BilinearGroup> {
    pub h: G::G1,
    pub proof: Vec<u8>,
    pub message: G::Scalar,
}

impl<G: BilinearGroup> ChameleonDigest<G> {
    /// `h || len(π) as u32 BE || π`. The message is not part of the wire form.
    pub fn to_wire(&self, group: &G) -> Vec<u8> {
        let mut out = group.encode_g1(self.h);
        out.extend_from_slice(&(self.proof.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.proof);
        out
    }

    /// Parses the wire form; returns the digest and the number of bytes read.
    pub fn from_wire(group: &G, bytes: &[u8], message: G::Scalar) -> Option<(Self, usize)> {
        let w = group.element_width();
        let h = group.decode_g1(bytes.get(..w)?)?;
        let len_bytes: [u8; 4] = bytes.get(w..w + 4)?.try_into().ok()?;
        let len = u32::from_be_bytes(len_bytes) as usize;
        let proof = bytes.get(w + 4..w + 4 + len)?.to_vec();
        Some((Self { h, proof, message }, w + 4 + len))
    }
}

/// Proof system for the relation `∃R: e(h - m·h2, g2) = e(R, ĥ1)`.
pub trait ProofBackend<G: BilinearGroup> {
    fn setup(&self, security_param: u32) -> Vec<u8>;
    fn prove(&self, group: &G, hk: &HashKey<G>, h: G::G1, m: G::Scalar, witness: G::G1) -> Vec<u8>;
    fn verify(&self, group: &G, hk: &HashKey<G>, h: G::G1, m: G::Scalar, proof: &[u8]) -> bool;
}

/// Witness-revealing backend: `π = 0x01 || R || m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransparentProof;

impl TransparentProof {
    pub const TAG: u8 = 0x01;

    /// Extracts `R` from a well-formed transparent proof.
    pub fn witness<G: BilinearGroup>(group: &G, proof: &[u8]) -> Option<G::G1> {
        let w = group.element_width();
        if proof.len() != 1 + 2 * w || proof[0] != Self::TAG {
            return None;
        }
        group.decode_g1(&proof[1..1 + w])
    }
}

impl<G: BilinearGroup> ProofBackend<G> for TransparentProof {
    fn setup(&self, _security_param: u32) -> Vec<u8> {
        Vec::new()
    }

    fn prove(&self, group: &G, _hk: &HashKey<G>, _h: G::G1, m: G::Scalar, witness: G::G1) -> Vec<u8> {
        let mut out = vec![Self::TAG];
        out.extend(group.encode_g1(witness));
        out.extend(group.encode_scalar(m));
        out
    }

    fn verify(&self, group: &G, hk: &HashKey<G>, h: G::G1, m: G::Scalar, proof: &[u8]) -> bool {
        let w = group.element_width();
        let Some(witness) = Self::witness(group, proof) else {
            return false;
        };
        if group.decode_scalar(&proof[1 + w..]) != Some(m) {
            return false;
        }
        let lhs = group.pair(group.g1_sub(h, group.g1_mul(hk.h2, m)), group.g2_generator());
        lhs == group.pair(witness, hk.h1_hat)
    }
}

/// Chameleon hash bound to a group and a proof backend.
#[derive(Clone, Debug)]
pub struct Chameleon<'g, G, B = TransparentProof> {
    group: &'g G,
    backend: B,
}

impl<'g, G: BilinearGroup> Chameleon<'g, G, TransparentProof> {
    pub fn transparent(group: &'g G) -> Self {
        Self {
            group,
            backend: TransparentProof,
        }
    }
}

impl<'g, G: BilinearGroup, B: ProofBackend<G>> Chameleon<'g, G, B> {
    pub fn with_backend(group: &'g G, backend: B) -> Self {
        Self { group, backend }
    }

    pub fn group(&self) -> &G {
        self.group
    }

    /// Draws `x` (redrawing zero) and `h2` (non-zero) from `rng`.
    pub fn keygen(
        &self,
        security_param: u32,
        rng: &mut dyn RngCore,
    ) -> Result<(HashKey<G>, Trapdoor<G>), ChameleonError> {
        if security_param == 0 {
            return Err(ChameleonError::InvalidSecurityParam);
        }
        if !self.group.order_at_least(5) {
            return Err(ChameleonError::DegenerateGroup);
        }
        let x = self.nonzero_scalar(rng);
        let h2 = self.group.g1_mul(self.group.g1_generator(), self.nonzero_scalar(rng));
        let crs = self.backend.setup(security_param);
        Ok(self.keys_from_parts(x, h2, crs))
    }

    /// Builds keys from an explicit trapdoor and `h2`.
    pub fn keys_from_parts(&self, x: G::Scalar, h2: G::G1, crs: Vec<u8>) -> (HashKey<G>, Trapdoor<G>) {
        let g = self.group;
        let hk = HashKey {
            h1: g.g1_mul(g.g1_generator(), x),
            h1_hat: g.g2_mul(g.g2_generator(), x),
            h2,
            crs,
        };
        (hk, Trapdoor { x })
    }

    fn nonzero_scalar(&self, rng: &mut dyn RngCore) -> G::Scalar {
        loop {
            let s = self.group.random_scalar(rng);
            if !self.group.scalar_is_zero(s) {
                return s;
            }
        }
    }

    /// `h = r·h1 + m·h2`, `π` proves knowledge of `R = r·g`.
    pub fn hash(&self, hk: &HashKey<G>, m: G::Scalar, r: G::Scalar) -> Result<ChameleonDigest<G>, ChameleonError> {
        let g = self.group;
        if g.scalar_is_zero(r) {
            return Err(ChameleonError::ZeroRandomness);
        }
        if !g.scalar_is_canonical(m) {
            return Err(ChameleonError::MessageOutOfRange);
        }
        let h = g.g1_add(g.g1_mul(hk.h1, r), g.g1_mul(hk.h2, m));
        let witness = g.g1_mul(g.g1_generator(), r);
        let proof = self.backend.prove(g, hk, h, m, witness);
        Ok(ChameleonDigest { h, proof, message: m })
    }

    /// Like [`hash`](Self::hash) with randomness drawn from `rng`.
    pub fn hash_random(
        &self,
        hk: &HashKey<G>,
        m: G::Scalar,
        rng: &mut dyn RngCore,
    ) -> Result<ChameleonDigest<G>, ChameleonError> {
        let r = self.nonzero_scalar(rng);
        self.hash(hk, m, r)
    }

    pub fn verify(&self, hk: &HashKey<G>, m: G::Scalar, digest: &ChameleonDigest<G>) -> bool {
        self.group.scalar_is_canonical(m) && self.backend.verify(self.group, hk, digest.h, m, &digest.proof)
    }

    /// Opens `old.h` to `m_new` using the trapdoor. `h` is left untouched.
    pub fn collide(
        &self,
        tk: &Trapdoor<G>,
        hk: &HashKey<G>,
        old: &ChameleonDigest<G>,
        m_new: G::Scalar,
    ) -> Result<ChameleonDigest<G>, ChameleonError> {
        let g = self.group;
        if !self.verify(hk, old.message, old) {
            return Err(ChameleonError::InvalidSourceDigest);
        }
        if !g.scalar_is_canonical(m_new) {
            return Err(ChameleonError::MessageOutOfRange);
        }
        let x_inv = g.scalar_inv(tk.x)?;
        let witness = g.g1_mul(g.g1_sub(old.h, g.g1_mul(hk.h2, m_new)), x_inv);
        let proof = self.backend.prove(g, hk, old.h, m_new, witness);
        let out = ChameleonDigest {
            h: old.h,
            proof,
            message: m_new,
        };
        if !self.verify(hk, m_new, &out) {
            return Err(ChameleonError::TrapdoorMismatch);
        }
        Ok(out)
    }
}

/// Maps arbitrary bytes into `Z_p` through SHA-256.
pub fn message_scalar<G: BilinearGroup>(group: &G, bytes: &[u8]) -> G::Scalar {
    group.scalar_from_hash(&content_hash(bytes))
}

pub fn message_scalar_from_hash<G: BilinearGroup>(group: &G, hash: &Hash32) -> G::Scalar {
    group.scalar_from_hash(hash)
}

pub fn ch_keygen<G: BilinearGroup>(
    security_param: u32,
    group: &G,
    rng: &mut dyn RngCore,
) -> Result<(HashKey<G>, Trapdoor<G>), ChameleonError> {
    Chameleon::transparent(group).keygen(security_param, rng)
}

pub fn ch_hash<G: BilinearGroup>(
    group: &G,
    hk: &HashKey<G>,
    m: G::Scalar,
    r: G::Scalar,
) -> Result<ChameleonDigest<G>, ChameleonError> {
    Chameleon::transparent(group).hash(hk, m, r)
}

pub fn ch_verify<G: BilinearGroup>(group: &G, hk: &HashKey<G>, m: G::Scalar, digest: &ChameleonDigest<G>) -> bool {
    Chameleon::transparent(group).verify(hk, m, digest)
}

pub fn ch_collide<G: BilinearGroup>(
    group: &G,
    tk: &Trapdoor<G>,
    hk: &HashKey<G>,
    old: &ChameleonDigest<G>,
    m_new: G::Scalar,
) -> Result<ChameleonDigest<G>, ChameleonError> {
    Chameleon::transparent(group).collide(tk, hk, old, m_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::ToyGroup;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> ToyGroup {
        ToyGroup::new(101, 1, 1).unwrap()
    }

    fn toy_keys(group: &ToyGroup) -> (HashKey<ToyGroup>, Trapdoor<ToyGroup>) {
        Chameleon::transparent(group).keys_from_parts(7, 5, Vec::new())
    }

    #[test]
    fn keygen_example_on_p101() {
        let g = toy();
        let (hk, tk) = toy_keys(&g);
        assert_eq!(hk.h1, 7);
        assert_eq!(hk.h1_hat, 7);
        assert_eq!(tk.secret(), 7);
        assert!(hk.crs.is_empty());
    }

    #[test]
    fn keygen_rejects_degenerate_groups() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let tiny = ToyGroup::new(3, 1, 1).unwrap();
        assert_eq!(
            ch_keygen(128, &tiny, &mut rng).err(),
            Some(ChameleonError::DegenerateGroup)
        );
        assert_eq!(
            ch_keygen(0, &toy(), &mut rng).err(),
            Some(ChameleonError::InvalidSecurityParam)
        );
    }

    #[test]
    fn keygen_never_returns_zero_trapdoor() {
        // p = 5 makes zero a 1-in-5 draw, so redraws happen often.
        let g = ToyGroup::new(5, 1, 1).unwrap();
        for seed in 0..200 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (hk, tk) = ch_keygen(1, &g, &mut rng).unwrap();
            assert_ne!(tk.secret(), 0);
            assert_ne!(hk.h2, 0);
            assert_eq!(hk.h1, g.mul_mod(g.g1_generator(), tk.secret()));
            assert_eq!(hk.h1_hat, g.mul_mod(g.g2_generator(), tk.secret()));
        }
    }

    #[test]
    fn keygen_seeds_give_distinct_trapdoors() {
        let g = ToyGroup::default_group();
        let a = ch_keygen(128, &g, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let b = ch_keygen(128, &g, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a.1.secret(), b.1.secret());
    }

    #[test]
    fn hash_verify_collide_worked_example() {
        let g = toy();
        let (hk, tk) = toy_keys(&g);
        let d = ch_hash(&g, &hk, 3, 10).unwrap();
        assert_eq!(d.h, 85);
        assert_eq!(TransparentProof::witness(&g, &d.proof), Some(10));
        assert!(ch_verify(&g, &hk, 3, &d));
        assert!(!ch_verify(&g, &hk, 4, &d));

        let c = ch_collide(&g, &tk, &hk, &d, 4).unwrap();
        assert_eq!(c.h, 85);
        assert_eq!(TransparentProof::witness(&g, &c.proof), Some(67));
        assert!(ch_verify(&g, &hk, 4, &c));
        assert!(!ch_verify(&g, &hk, 3, &c));
    }

    #[test]
    fn zero_message_and_zero_randomness() {
        let g = toy();
        let (hk, _) = toy_keys(&g);
        let d = ch_hash(&g, &hk, 0, 10).unwrap();
        assert_eq!(d.h, 70);
        assert_eq!(TransparentProof::witness(&g, &d.proof), Some(10));
        assert_eq!(ch_hash(&g, &hk, 3, 0).err(), Some(ChameleonError::ZeroRandomness));
        assert_eq!(ch_hash(&g, &hk, 101, 1).err(), Some(ChameleonError::MessageOutOfRange));
    }

    #[test]
    fn hashing_is_deterministic_given_randomness() {
        let g = toy();
        let (hk, _) = toy_keys(&g);
        assert_eq!(ch_hash(&g, &hk, 3, 10), ch_hash(&g, &hk, 3, 10));
    }

    #[test]
    fn collide_to_same_message_is_identity() {
        let g = toy();
        let (hk, tk) = toy_keys(&g);
        let d = ch_hash(&g, &hk, 3, 10).unwrap();
        assert_eq!(ch_collide(&g, &tk, &hk, &d, 3).unwrap(), d);
    }

    #[test]
    fn collide_rejects_bad_source_and_wrong_trapdoor() {
        let g = toy();
        let (hk, _) = toy_keys(&g);
        let mut d = ch_hash(&g, &hk, 3, 10).unwrap();
        let (_, other_tk) = Chameleon::transparent(&g).keys_from_parts(8, 5, Vec::new());
        assert_eq!(
            ch_collide(&g, &other_tk, &hk, &d, 4).err(),
            Some(ChameleonError::TrapdoorMismatch)
        );
        d.message = 4;
        let (_, tk) = toy_keys(&g);
        assert_eq!(
            ch_collide(&g, &tk, &hk, &d, 5).err(),
            Some(ChameleonError::InvalidSourceDigest)
        );
    }

    #[test]
    fn malformed_proofs_are_rejected_not_panics() {
        let g = toy();
        let (hk, _) = toy_keys(&g);
        let d = ch_hash(&g, &hk, 3, 10).unwrap();
        for proof in [
            vec![],
            vec![0x01],
            vec![0x02, 10, 3],
            vec![0x01, 10, 3, 0],
            vec![0x01, 200, 3],
        ] {
            let bad = ChameleonDigest { proof, ..d.clone() };
            assert!(!ch_verify(&g, &hk, 3, &bad));
        }
    }

    #[test]
    fn wire_form_round_trips() {
        let g = ToyGroup::default_group();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (hk, _) = ch_keygen(128, &g, &mut rng).unwrap();
        let d = Chameleon::transparent(&g).hash_random(&hk, 12345, &mut rng).unwrap();
        let wire = d.to_wire(&g);
        assert_eq!(wire.len(), 8 + 4 + d.proof.len());
        assert_eq!(&wire[8..12], &(d.proof.len() as u32).to_be_bytes());
        let (back, used) = ChameleonDigest::from_wire(&g, &wire, 12345).unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(back, d);
        assert!(ChameleonDigest::<ToyGroup>::from_wire(&g, &wire[..wire.len() - 1], 0).is_none());
    }
}
