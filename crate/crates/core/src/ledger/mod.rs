//! Transactions, blocks, pin certificates and the pinned chain state.

pub mod block;
pub mod codec;
pub mod merkle;
pub mod pin;
pub mod state;
pub mod tx;

use crate::crypto::{ChameleonDigest, Hash32, HashKey, PublicKey, ToyGroup};

pub type Digest = ChameleonDigest<ToyGroup>;
pub type HashKeyT = HashKey<ToyGroup>;
/// Patients are identified by their signing public key.
pub type PatientId = PublicKey;
pub type TxId = Hash32;

pub use block::{
    append_pinned_tx, decode_block, encode_block, puzzle_preimage, AppendError, Block, KeyBlock, MicroBlock, PinnedTx,
    Target, GENESIS_MICROBLOCK_HASH,
};
pub use codec::{DecodeError, DecodeErrorKind};
pub use merkle::{institution_leaf, institution_root, merkle_top, redact_root, MerkleError};
pub use pin::{quorum_met, sign_vote, vote_message, PinCertificate, PinError, PinSignature};
pub use state::{ChainState, HistoryEntry, Registration, RejectReason, StateError};
pub use tx::{build_tx, RecordRef, Transaction, TxBuildError, TxPayload, TxType};
