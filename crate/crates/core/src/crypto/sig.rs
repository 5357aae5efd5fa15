//! Ed25519 signatures for transactions and pinning votes.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;

use super::hash::content_hash;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(self.0)[..16])
    }
}

impl PublicKey {
    /// Address derived from the key: hex of the first 20 bytes of SHA-256(pk).
    pub fn address(&self) -> String {
        hex::encode(&content_hash(&self.0).as_bytes()[..20])
    }
}

#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn generate(rng: &mut dyn RngCore) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair").field("public", &self.public()).finish()
    }
}

pub fn sign(msg: &[u8], key: &Keypair) -> Signature {
    Signature(key.signing.sign(msg).to_bytes())
}

/// False on a bad signature or a public key that is not a curve point.
pub fn verify_sig(msg: &[u8], sig: &Signature, pk: &PublicKey) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    vk.verify(msg, &ed25519_dalek::Signature::from_bytes(&sig.0)).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_and_verify() {
        let a = Keypair::from_seed([1; 32]);
        let b = Keypair::from_seed([2; 32]);
        let sig = sign(b"tx", &a);
        assert!(verify_sig(b"tx", &sig, &a.public()));
        assert!(!verify_sig(b"tx", &sig, &b.public()));
        assert!(!verify_sig(b"tX", &sig, &a.public()));
    }

    #[test]
    fn malformed_inputs_are_false() {
        let a = Keypair::from_seed([1; 32]);
        assert!(!verify_sig(b"tx", &Signature([0xff; 64]), &a.public()));
        let sig = sign(b"tx", &a);
        // y = 2 does not decompress to a curve point.
        let mut bad = [0u8; 32];
        bad[0] = 2;
        assert!(!verify_sig(b"tx", &sig, &PublicKey(bad)));
    }

    #[test]
    fn seeds_are_deterministic_and_addresses_distinct() {
        assert_eq!(
            Keypair::from_seed([3; 32]).public(),
            Keypair::from_seed([3; 32]).public()
        );
        assert_ne!(
            Keypair::from_seed([3; 32]).public().address(),
            Keypair::from_seed([4; 32]).public().address()
        );
        assert_eq!(Keypair::from_seed([3; 32]).public().address().len(), 40);
    }
}
