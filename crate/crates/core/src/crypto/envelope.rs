//! Double authenticated-encryption envelope for medical records.
//!
//! The patient key seals the record first; the institution key seals the
//! result. Each layer is AES-256-GCM with a fresh 96-bit nonce and a
//! layer-specific associated-data tag, so an inner ciphertext can never be
//! opened as an outer one (or vice versa).

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;
use thiserror::Error;

use super::hash::content_hash;

const NONCE_LEN: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("authentication failed for {0:?} layer")]
    Authentication(Layer),
    #[error("ciphertext shorter than nonce")]
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Patient layer.
    Inner,
    /// Institution layer.
    Outer,
}

impl Layer {
    fn aad(self) -> &'static [u8] {
        match self {
            Layer::Inner => b"spchain/emr/inner",
            Layer::Outer => b"spchain/emr/outer",
        }
    }
}

/// 256-bit symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; 32]);

/// Short public identifier of a key: first 8 bytes of its SHA-256.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyId(pub [u8; 8]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn generate(rng: &mut dyn RngCore) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn id(&self) -> KeyId {
        let h = content_hash(&self.0);
        let mut id = [0u8; 8];
        id.copy_from_slice(&h.as_bytes()[..8]);
        KeyId(id)
    }

    pub(crate) fn expose(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey({:?})", self.id())
    }
}

/// Record sealed under both layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedEmr {
    pub ciphertext: Vec<u8>,
    pub patient_key_id: KeyId,
    pub institution_key_id: KeyId,
    pub plaintext_len: usize,
}

/// Seals one layer: `nonce || ciphertext || tag`.
pub fn seal_layer(plaintext: &[u8], key: &SymmetricKey, layer: Layer, rng: &mut dyn RngCore) -> Vec<u8> {
    let cipher = Aes256Gcm::new(key.expose().into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: layer.aad(),
            },
        )
        .expect("AES-GCM encryption does not fail for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

/// Opens one layer. Wrong key or wrong layer fails closed.
pub fn unseal_layer(ciphertext: &[u8], key: &SymmetricKey, layer: Layer) -> Result<Vec<u8>, EnvelopeError> {
    if ciphertext.len() < NONCE_LEN {
        return Err(EnvelopeError::Truncated);
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    Aes256Gcm::new(key.expose().into())
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: body,
                aad: layer.aad(),
            },
        )
        .map_err(|_| EnvelopeError::Authentication(layer))
}

pub fn seal_emr(
    record: &[u8],
    patient_key: &SymmetricKey,
    institution_key: &SymmetricKey,
    rng: &mut dyn RngCore,
) -> SealedEmr {
    let inner = seal_layer(record, patient_key, Layer::Inner, rng);
    SealedEmr {
        ciphertext: seal_layer(&inner, institution_key, Layer::Outer, rng),
        patient_key_id: patient_key.id(),
        institution_key_id: institution_key.id(),
        plaintext_len: record.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys() -> (SymmetricKey, SymmetricKey, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let p = SymmetricKey::generate(&mut rng);
        let i = SymmetricKey::generate(&mut rng);
        (p, i, rng)
    }

    fn open(sealed: &SealedEmr, p: &SymmetricKey, i: &SymmetricKey) -> Vec<u8> {
        let inner = unseal_layer(&sealed.ciphertext, i, Layer::Outer).unwrap();
        unseal_layer(&inner, p, Layer::Inner).unwrap()
    }

    #[test]
    fn round_trip_and_metadata() {
        let (p, i, mut rng) = keys();
        let sealed = seal_emr(b"diagnosis: flu", &p, &i, &mut rng);
        assert_eq!(sealed.plaintext_len, 14);
        assert_eq!(sealed.patient_key_id, p.id());
        assert_eq!(sealed.institution_key_id, i.id());
        assert_eq!(open(&sealed, &p, &i), b"diagnosis: flu");
    }

    #[test]
    fn empty_record_round_trips() {
        let (p, i, mut rng) = keys();
        let sealed = seal_emr(b"", &p, &i, &mut rng);
        assert_eq!(open(&sealed, &p, &i), b"");
    }

    #[test]
    fn key_confusion_fails_closed() {
        let (p, i, mut rng) = keys();
        let sealed = seal_emr(b"record", &p, &i, &mut rng);
        assert_eq!(
            unseal_layer(&sealed.ciphertext, &p, Layer::Outer),
            Err(EnvelopeError::Authentication(Layer::Outer))
        );
        // Right key, wrong layer tag.
        assert_eq!(
            unseal_layer(&sealed.ciphertext, &i, Layer::Inner),
            Err(EnvelopeError::Authentication(Layer::Inner))
        );
        let inner = unseal_layer(&sealed.ciphertext, &i, Layer::Outer).unwrap();
        assert!(unseal_layer(&inner, &i, Layer::Inner).is_err());
        assert_eq!(
            unseal_layer(&inner[..5], &p, Layer::Inner),
            Err(EnvelopeError::Truncated)
        );
    }

    #[test]
    fn tampering_is_detected() {
        let (p, i, mut rng) = keys();
        let mut sealed = seal_emr(b"record", &p, &i, &mut rng);
        let last = sealed.ciphertext.len() - 1;
        sealed.ciphertext[last] ^= 1;
        assert!(unseal_layer(&sealed.ciphertext, &i, Layer::Outer).is_err());
    }

    #[test]
    fn one_mebibyte_round_trip() {
        let (p, i, mut rng) = keys();
        let mut record = vec![0u8; 1 << 20];
        rand::RngCore::fill_bytes(&mut rng, &mut record);
        let sealed = seal_emr(&record, &p, &i, &mut rng);
        assert_eq!(open(&sealed, &p, &i), record);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn envelope_is_identity(record in proptest::collection::vec(any::<u8>(), 0..4096), seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let p = SymmetricKey::generate(&mut rng);
            let i = SymmetricKey::generate(&mut rng);
            let sealed = seal_emr(&record, &p, &i, &mut rng);
            prop_assert_eq!(open(&sealed, &p, &i), record);
        }
    }
}
