use std::collections::HashMap;

use thiserror::Error;

use crate::crypto::content_hash;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("store unavailable")]
    Unavailable,
}

/// Content-addressed ciphertext store kept by one institution.
/// Pointers are the hex SHA-256 of the stored bytes.
#[derive(Clone, Debug, Default)]
pub struct OffChainStore {
    blobs: HashMap<String, Vec<u8>>,
    offline: bool,
}

impl OffChainStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_offline(&mut self, offline: bool) {
        self.offline = offline;
    }

    pub fn put(&mut self, bytes: Vec<u8>) -> Result<String, StoreError> {
        if self.offline {
            return Err(StoreError::Unavailable);
        }
        let pointer = content_hash(&bytes).to_hex();
        self.blobs.insert(pointer.clone(), bytes);
        Ok(pointer)
    }

    pub fn get(&self, pointer: &str) -> Result<Option<&[u8]>, StoreError> {
        if self.offline {
            return Err(StoreError::Unavailable);
        }
        Ok(self.blobs.get(pointer).map(Vec::as_slice))
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub(crate) fn blobs(&self) -> impl Iterator<Item = &[u8]> {
        self.blobs.values().map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointer_is_content_hash() {
        let mut s = OffChainStore::new();
        let p = s.put(b"abc".to_vec()).unwrap();
        assert_eq!(p, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(s.get(&p).unwrap(), Some(&b"abc"[..]));
        s.set_offline(true);
        assert_eq!(s.put(vec![1]), Err(StoreError::Unavailable));
    }
}
