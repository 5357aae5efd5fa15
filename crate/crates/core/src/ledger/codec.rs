//! Canonical binary encoding.
//!
//! Field order is fixed, integers are big-endian fixed width, variable-size
//! data is prefixed by a `u32` length. Decoding is strict: truncation,
//! trailing bytes and unknown tags fail with the byte offset where parsing
//! stopped.

use thiserror::Error;

use crate::crypto::{BilinearGroup, ChameleonDigest, Hash32, PublicKey, Signature, ToyGroup};
use crate::MinerId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("decode error at byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    #[error("unexpected end of input")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("unknown transaction type {0}")]
    UnknownTxType(u8),
    #[error("unknown block tag {0}")]
    UnknownBlockTag(u8),
    #[error("invalid tag {0} for {1}")]
    InvalidTag(u8, &'static str),
    #[error("invalid group element")]
    InvalidElement,
    #[error("invalid utf-8 string")]
    InvalidString,
    #[error("length {0} exceeds remaining input")]
    LengthOverflow(u32),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32).raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn hash(&mut self, h: &Hash32) -> &mut Self {
        self.raw(h.as_bytes())
    }

    pub fn miner(&mut self, id: MinerId) -> &mut Self {
        self.u32(id.0)
    }

    pub fn public_key(&mut self, pk: &PublicKey) -> &mut Self {
        self.raw(&pk.0)
    }

    pub fn signature(&mut self, sig: &Signature) -> &mut Self {
        self.raw(&sig.0)
    }

    /// Digest wire form, length-prefixed, followed by the bound message.
    pub fn digest(&mut self, group: &ToyGroup, d: &ChameleonDigest<ToyGroup>) -> &mut Self {
        self.bytes(&d.to_wire(group));
        self.raw(&group.encode_scalar(d.message))
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn error(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { offset: self.pos, kind }
    }

    pub fn error_at(&self, offset: usize, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { offset, kind }
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        let rest = self.bytes.len() - self.pos;
        if rest == 0 {
            Ok(())
        } else {
            Err(self.error(DecodeErrorKind::TrailingBytes(rest)))
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.error(DecodeErrorKind::Truncated))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Reads a `u32` count, bounding it by the remaining input so a corrupt
    /// prefix cannot trigger a huge allocation.
    pub fn len(&mut self, min_item_size: usize) -> Result<usize, DecodeError> {
        let at = self.pos;
        let n = self.u32()?;
        let remaining = self.bytes.len() - self.pos;
        if (n as usize).saturating_mul(min_item_size.max(1)) > remaining {
            return Err(self.error_at(at, DecodeErrorKind::LengthOverflow(n)));
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let at = self.pos;
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.error_at(at, DecodeErrorKind::InvalidString))
    }

    pub fn hash(&mut self) -> Result<Hash32, DecodeError> {
        Ok(Hash32(self.array()?))
    }

    pub fn miner(&mut self) -> Result<MinerId, DecodeError> {
        Ok(MinerId(self.u32()?))
    }

    pub fn public_key(&mut self) -> Result<PublicKey, DecodeError> {
        Ok(PublicKey(self.array()?))
    }

    pub fn signature(&mut self) -> Result<Signature, DecodeError> {
        Ok(Signature(self.array()?))
    }

    pub fn digest(&mut self, group: &ToyGroup) -> Result<ChameleonDigest<ToyGroup>, DecodeError> {
        let at = self.pos;
        let wire = self.bytes()?;
        let m_at = self.pos;
        let m_bytes = self.take(group.element_width())?;
        let message = group
            .decode_scalar(m_bytes)
            .ok_or_else(|| self.error_at(m_at, DecodeErrorKind::InvalidElement))?;
        match ChameleonDigest::from_wire(group, wire, message) {
            Some((d, used)) if used == wire.len() => Ok(d),
            _ => Err(self.error_at(at, DecodeErrorKind::InvalidElement)),
        }
    }

    pub fn option_tag(&mut self, what: &'static str) -> Result<bool, DecodeError> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(self.error_at(at, DecodeErrorKind::InvalidTag(t, what))),
        }
    }
}
