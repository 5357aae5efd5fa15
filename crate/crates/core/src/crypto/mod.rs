//! Cryptographic building blocks.

pub mod chameleon;
pub mod envelope;
pub mod group;
pub mod hash;
pub mod sig;

pub use chameleon::{
    ch_collide, ch_hash, ch_keygen, ch_verify, message_scalar, message_scalar_from_hash, Chameleon, ChameleonDigest,
    ChameleonError, HashKey, ProofBackend, TransparentProof, Trapdoor,
};
pub use envelope::{seal_emr, unseal_layer, EnvelopeError, KeyId, Layer, SealedEmr, SymmetricKey};
pub use group::{BilinearGroup, GroupError, ToyGroup};
pub use hash::{content_hash, hash_parts, Hash32};
pub use sig::{sign, verify_sig, Keypair, PublicKey, Signature};
