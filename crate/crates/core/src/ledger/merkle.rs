//! Institution hash root: a binary Merkle tree whose top digest is
//! chameleon-hashed, so the root can be re-opened after a leaf is redacted.

use thiserror::Error;

use super::{Digest, HashKeyT};
use crate::crypto::chameleon::message_scalar_from_hash;
use crate::crypto::{ch_collide, ch_hash, content_hash, hash_parts, ChameleonError, Hash32, ToyGroup, Trapdoor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MerkleError {
    #[error("institution root needs at least one leaf")]
    Empty,
    #[error(transparent)]
    Chameleon(#[from] ChameleonError),
}

/// Plain Merkle top over content-hashed leaves.
///
/// A level with odd width duplicates its last digest.
pub fn merkle_top(leaves: &[Vec<u8>]) -> Result<Hash32, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::Empty);
    }
    let mut level: Vec<Hash32> = leaves.iter().map(|l| content_hash(l)).collect();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().expect("non-empty"));
        }
        level = level
            .chunks(2)
            .map(|pair| hash_parts(&[pair[0].as_bytes(), pair[1].as_bytes()]))
            .collect();
    }
    Ok(level[0])
}

/// Chameleon-hashes the Merkle top with randomness `r`.
pub fn institution_root(group: &ToyGroup, leaves: &[Vec<u8>], hk: &HashKeyT, r: u64) -> Result<Digest, MerkleError> {
    let top = merkle_top(leaves)?;
    Ok(ch_hash(group, hk, message_scalar_from_hash(group, &top), r)?)
}

/// Re-opens `root` to the Merkle top of `new_leaves`; `root.h` is unchanged.
pub fn redact_root(
    group: &ToyGroup,
    tk: &Trapdoor<ToyGroup>,
    hk: &HashKeyT,
    root: &Digest,
    new_leaves: &[Vec<u8>],
) -> Result<Digest, MerkleError> {
    let top = merkle_top(new_leaves)?;
    Ok(ch_collide(group, tk, hk, root, message_scalar_from_hash(group, &top))?)
}

/// Canonical leaf for one institution's certified public information.
pub fn institution_leaf(
    group: &ToyGroup,
    id: crate::MinerId,
    key: &crate::crypto::PublicKey,
    hk: &HashKeyT,
) -> Vec<u8> {
    use crate::crypto::BilinearGroup;
    let mut w = super::codec::Writer::new();
    w.miner(id)
        .public_key(key)
        .raw(&group.encode_g1(hk.h1))
        .raw(&group.encode_g1(hk.h2))
        .bytes(&hk.crs);
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::ch_verify;
    use crate::crypto::chameleon::Chameleon;
    use sha2::{Digest as _, Sha256};

    fn sha(b: &[u8]) -> [u8; 32] {
        Sha256::digest(b).into()
    }

    fn pair(a: [u8; 32], b: [u8; 32]) -> [u8; 32] {
        let mut v = a.to_vec();
        v.extend_from_slice(&b);
        sha(&v)
    }

    fn leaves(names: &[&str]) -> Vec<Vec<u8>> {
        names.iter().map(|n| n.as_bytes().to_vec()).collect()
    }

    #[test]
    fn three_leaf_tree_matches_hand_built_oracle() {
        let (l1, l2, l3) = (sha(b"A"), sha(b"B"), sha(b"C"));
        let expect = pair(pair(l1, l2), pair(l3, l3));
        assert_eq!(merkle_top(&leaves(&["A", "B", "C"])).unwrap().0, expect);
    }

    #[test]
    fn single_leaf_is_its_hash() {
        assert_eq!(merkle_top(&leaves(&["A"])).unwrap().0, sha(b"A"));
        assert_eq!(merkle_top(&[]).unwrap_err(), MerkleError::Empty);
    }

    #[test]
    fn order_sensitive() {
        assert_ne!(
            merkle_top(&leaves(&["A", "B"])).unwrap(),
            merkle_top(&leaves(&["B", "A"])).unwrap()
        );
    }

    #[test]
    fn root_survives_redaction() {
        let g = ToyGroup::default_group();
        let ch = Chameleon::transparent(&g);
        let (hk, tk) = ch.keys_from_parts(123_456_789, 987_654_321, Vec::new());
        let before = leaves(&["A", "B", "C"]);
        let root = institution_root(&g, &before, &hk, 42).unwrap();
        assert!(ch_verify(&g, &hk, root.message, &root));

        let after = leaves(&["A", "B-redacted", "C"]);
        let redacted = redact_root(&g, &tk, &hk, &root, &after).unwrap();
        assert_eq!(redacted.h, root.h);
        assert_ne!(redacted.message, root.message);
        assert!(ch_verify(&g, &hk, redacted.message, &redacted));
    }
}
