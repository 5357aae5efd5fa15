//! Bilinear group abstraction and the toy symmetric-pairing backend.
//!
//! The toy backend works over the additive groups `G1 = G2 = GT = Z_p` with
//! the pairing `e(a, b) = a * b mod p`. It is bilinear by construction but
//! offers no hardness at all; it exists so the chameleon hash and everything
//! above it can be exercised exactly and exhaustively on small primes.

use std::fmt::Debug;

use rand::RngCore;
use thiserror::Error;

use super::hash::Hash32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("group order {0} is not prime")]
    NotPrime(u64),
    #[error("generator must be non-zero mod p")]
    ZeroGenerator,
    #[error("scalar has no inverse (zero)")]
    NotInvertible,
}

/// Operations the chameleon hash needs from a pairing-friendly group.
///
/// Group operations are written additively: `g1_mul(P, k)` is `k·P`.
pub trait BilinearGroup: Clone + Debug + PartialEq + Eq {
    type Scalar: Copy + Eq + Debug;
    type G1: Copy + Eq + Debug;
    type G2: Copy + Eq + Debug;
    type Gt: Copy + Eq + Debug;

    /// Bit length of the prime group order.
    fn order_bits(&self) -> u32;
    /// True when the group order is at least `n`.
    fn order_at_least(&self, n: u64) -> bool;

    fn scalar_zero(&self) -> Self::Scalar;
    fn scalar_is_zero(&self, s: Self::Scalar) -> bool;
    /// True when `s` is already reduced into `[0, p)`.
    fn scalar_is_canonical(&self, s: Self::Scalar) -> bool;
    fn scalar_inv(&self, s: Self::Scalar) -> Result<Self::Scalar, GroupError>;
    /// Uniform scalar in `[0, p)`.
    fn random_scalar(&self, rng: &mut dyn RngCore) -> Self::Scalar;
    /// Reduces a 256-bit content hash into `Z_p`.
    fn scalar_from_hash(&self, hash: &Hash32) -> Self::Scalar;

    fn g1_generator(&self) -> Self::G1;
    fn g2_generator(&self) -> Self::G2;
    fn g1_mul(&self, p: Self::G1, k: Self::Scalar) -> Self::G1;
    fn g1_add(&self, a: Self::G1, b: Self::G1) -> Self::G1;
    fn g1_sub(&self, a: Self::G1, b: Self::G1) -> Self::G1;
    fn g2_mul(&self, p: Self::G2, k: Self::Scalar) -> Self::G2;
    fn pair(&self, a: Self::G1, b: Self::G2) -> Self::Gt;

    /// Fixed-width big-endian width of one encoded element or scalar.
    fn element_width(&self) -> usize {
        (self.order_bits() as usize).div_ceil(8)
    }
    fn encode_g1(&self, p: Self::G1) -> Vec<u8>;
    fn decode_g1(&self, bytes: &[u8]) -> Option<Self::G1>;
    fn encode_scalar(&self, s: Self::Scalar) -> Vec<u8>;
    fn decode_scalar(&self, bytes: &[u8]) -> Option<Self::Scalar>;
}

/// Toy symmetric pairing over `Z_p` for a 64-bit prime `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyGroup {
    p: u64,
    g: u64,
    g2: u64,
}

/// Mersenne prime 2^61 - 1, the order used by the simulator.
pub const DEFAULT_ORDER: u64 = (1 << 61) - 1;

impl ToyGroup {
    pub fn new(p: u64, g: u64, g2: u64) -> Result<Self, GroupError> {
        if !is_prime(p) {
            return Err(GroupError::NotPrime(p));
        }
        if g.is_multiple_of(p) || g2.is_multiple_of(p) {
            return Err(GroupError::ZeroGenerator);
        }
        Ok(Self {
            p,
            g: g % p,
            g2: g2 % p,
        })
    }

    /// The group used by the simulator and the node actors.
    pub fn default_group() -> Self {
        Self::new(DEFAULT_ORDER, 5, 7).expect("2^61-1 is prime")
    }

    pub fn order(&self) -> u64 {
        self.p
    }

    pub fn mul_mod(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    pub fn add_mod(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.p as u128) as u64
    }

    pub fn sub_mod(&self, a: u64, b: u64) -> u64 {
        self.add_mod(a, self.p - b % self.p)
    }

    fn pow_mod(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul_mod(acc, base);
            }
            base = self.mul_mod(base, base);
            exp >>= 1;
        }
        acc
    }

    fn encode_u64(&self, v: u64) -> Vec<u8> {
        let w = self.element_width();
        v.to_be_bytes()[8 - w..].to_vec()
    }

    fn decode_u64(&self, bytes: &[u8]) -> Option<u64> {
        if bytes.len() != self.element_width() {
            return None;
        }
        let mut buf = [0u8; 8];
        buf[8 - bytes.len()..].copy_from_slice(bytes);
        let v = u64::from_be_bytes(buf);
        (v < self.p).then_some(v)
    }
}

impl BilinearGroup for ToyGroup {
    type Scalar = u64;
    type G1 = u64;
    type G2 = u64;
    type Gt = u64;

    fn order_bits(&self) -> u32 {
        64 - self.p.leading_zeros()
    }

    fn order_at_least(&self, n: u64) -> bool {
        self.p >= n
    }

    fn scalar_zero(&self) -> u64 {
        0
    }

    fn scalar_is_canonical(&self, s: u64) -> bool {
        s < self.p
    }

    fn scalar_is_zero(&self, s: u64) -> bool {
        s.is_multiple_of(self.p)
    }

    fn scalar_inv(&self, s: u64) -> Result<u64, GroupError> {
        if self.scalar_is_zero(s) {
            return Err(GroupError::NotInvertible);
        }
        // Fermat: s^(p-2) mod p.
        Ok(self.pow_mod(s, self.p - 2))
    }

    fn random_scalar(&self, rng: &mut dyn RngCore) -> u64 {
        // Rejection sampling keeps the draw uniform.
        let bits = self.order_bits();
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        loop {
            let v = rng.next_u64() & mask;
            if v < self.p {
                return v;
            }
        }
    }

    fn scalar_from_hash(&self, hash: &Hash32) -> u64 {
        let mut acc: u128 = 0;
        for byte in hash.as_bytes() {
            acc = ((acc << 8) | *byte as u128) % self.p as u128;
        }
        acc as u64
    }

    fn g1_generator(&self) -> u64 {
        self.g
    }

    fn g2_generator(&self) -> u64 {
        self.g2
    }

    fn g1_mul(&self, p: u64, k: u64) -> u64 {
        self.mul_mod(p, k)
    }

    fn g1_add(&self, a: u64, b: u64) -> u64 {
        self.add_mod(a, b)
    }

    fn g1_sub(&self, a: u64, b: u64) -> u64 {
        self.sub_mod(a, b)
    }

    fn g2_mul(&self, p: u64, k: u64) -> u64 {
        self.mul_mod(p, k)
    }

    fn pair(&self, a: u64, b: u64) -> u64 {
        self.mul_mod(a, b)
    }

    fn encode_g1(&self, p: u64) -> Vec<u8> {
        self.encode_u64(p)
    }

    fn decode_g1(&self, bytes: &[u8]) -> Option<u64> {
        self.decode_u64(bytes)
    }

    fn encode_scalar(&self, s: u64) -> Vec<u8> {
        self.encode_u64(s)
    }

    fn decode_scalar(&self, bytes: &[u8]) -> Option<u64> {
        self.decode_u64(bytes)
    }
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn toy() -> ToyGroup {
        ToyGroup::new(101, 1, 1).unwrap()
    }

    #[test]
    fn rejects_composite_order() {
        assert_eq!(ToyGroup::new(100, 1, 1), Err(GroupError::NotPrime(100)));
        assert_eq!(ToyGroup::new(101, 0, 1), Err(GroupError::ZeroGenerator));
        assert_eq!(ToyGroup::new(101, 1, 202), Err(GroupError::ZeroGenerator));
    }

    #[test]
    fn primality_matches_trial_division() {
        let trial = |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d));
        for n in 0..5000 {
            assert_eq!(is_prime(n), trial(n), "n = {n}");
        }
        assert!(is_prime(DEFAULT_ORDER));
        assert!(!is_prime(DEFAULT_ORDER - 2));
    }

    #[test]
    fn inverse_of_seven_mod_101() {
        let g = toy();
        assert_eq!(g.scalar_inv(7).unwrap(), 29);
        assert_eq!(g.scalar_inv(0), Err(GroupError::NotInvertible));
        for s in 1..101 {
            assert_eq!(g.mul_mod(s, g.scalar_inv(s).unwrap()), 1);
        }
    }

    #[test]
    fn bilinearity_on_random_samples() {
        for group in [toy(), ToyGroup::default_group()] {
            let mut rng = ChaCha20Rng::seed_from_u64(17);
            for _ in 0..1000 {
                let a = group.random_scalar(&mut rng);
                let b = group.random_scalar(&mut rng);
                let x = group.random_scalar(&mut rng);
                let y = group.random_scalar(&mut rng);
                let lhs = group.pair(group.g1_mul(x, a), group.g2_mul(y, b));
                let rhs = group.mul_mod(group.mul_mod(a, b), group.pair(x, y));
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn element_width_and_encoding() {
        let g = toy();
        assert_eq!(g.order_bits(), 7);
        assert_eq!(g.element_width(), 1);
        assert_eq!(g.encode_g1(85), vec![85]);
        assert_eq!(g.decode_g1(&[101]), None);
        assert_eq!(g.decode_g1(&[0, 1]), None);

        let big = ToyGroup::default_group();
        assert_eq!(big.element_width(), 8);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v = rng.gen_range(0..big.order());
            assert_eq!(big.decode_g1(&big.encode_g1(v)), Some(v));
        }
    }

    #[test]
    fn hash_reduction_is_big_endian_mod_p() {
        let g = toy();
        let mut bytes = [0u8; 32];
        bytes[31] = 205;
        assert_eq!(g.scalar_from_hash(&Hash32(bytes)), 205 % 101);
        bytes[30] = 1;
        assert_eq!(g.scalar_from_hash(&Hash32(bytes)), (256 + 205) % 101);
    }
}
