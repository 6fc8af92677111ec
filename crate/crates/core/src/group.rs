//! Safe-prime group arithmetic.
//!
//! All protocol algebra happens in the order-q subgroup of Z_p^* for a safe
//! prime p = 2q + 1. This module owns parameter generation, membership
//! checks, scalar and element arithmetic, and the small-group brute-force
//! discrete log used by the leveraging experiments.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rng::Tape;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("bit length {0} too small, need at least 4")]
    InvalidBits(u32),
    #[error("no safe prime found within the iteration budget")]
    SearchExhausted,
    #[error("scalar zero is not invertible")]
    NonInvertible,
    #[error("value {0} is not a valid scalar (must be < q)")]
    InvalidScalar(String),
    #[error("value {0} is not a valid group element (must be in [1, p))")]
    InvalidElement(String),
    #[error("bad hex encoding: {0}")]
    BadEncoding(String),
}

/// Exponent in Z_q.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar(BigUint);

/// Element of Z_p^* (subgroup membership checked separately via
/// [`GroupParams::is_member`]).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupElement(BigUint);

impl Scalar {
    pub fn from_u64(v: u64) -> Self {
        Scalar(BigUint::from(v))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }
}

impl GroupElement {
    pub fn from_u64(v: u64) -> Self {
        GroupElement(BigUint::from(v))
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }
}

fn hex_to_biguint(s: &str) -> Result<BigUint, GroupError> {
    BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| GroupError::BadEncoding(s.to_string()))
}

/// serde adapter for `#[serde(with = "biguint_hex")]` fields.
pub mod biguint_hex {
    use super::*;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        super::hex_to_biguint(&s).map_err(D::Error::custom)
    }
}

// Interface encoding for big integers: lowercase hex, big-endian, no
// leading zeros (BigUint::to_str_radix already yields exactly that).
macro_rules! hex_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0.to_str_radix(16))
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                hex_to_biguint(&s).map(Self).map_err(D::Error::custom)
            }
        }
    };
}
hex_serde!(Scalar);
hex_serde!(GroupElement);

/// Safe-prime group description: p = 2q + 1, g generates the order-q
/// subgroup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    bits: u32,
}

#[derive(Serialize, Deserialize)]
struct GroupParamsWire {
    p: String,
    q: String,
    g: String,
}

impl Serialize for GroupParams {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GroupParamsWire {
            p: self.p.to_str_radix(16),
            q: self.q.to_str_radix(16),
            g: self.g.to_str_radix(16),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = GroupParamsWire::deserialize(d)?;
        let p = hex_to_biguint(&w.p).map_err(D::Error::custom)?;
        let q = hex_to_biguint(&w.q).map_err(D::Error::custom)?;
        let g = hex_to_biguint(&w.g).map_err(D::Error::custom)?;
        GroupParams::from_parts(p, q, g).map_err(D::Error::custom)
    }
}

impl GroupParams {
    /// Assemble params from explicit values, re-checking every invariant:
    /// both primes, p = 2q + 1, and g a non-identity element of order q.
    pub fn from_parts(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, GroupError> {
        let mut mr_tape = Tape::derive(0x5052_494d_4521, "miller-rabin", 0);
        if !is_probable_prime(&p, &mut mr_tape) || !is_probable_prime(&q, &mut mr_tape) {
            return Err(GroupError::InvalidElement("p or q not prime".into()));
        }
        if p != (&q << 1u32) + BigUint::one() {
            return Err(GroupError::InvalidElement("p != 2q + 1".into()));
        }
        if g.is_one() || g.is_zero() || g >= p || !g.modpow(&q, &p).is_one() {
            return Err(GroupError::InvalidElement("g does not have order q".into()));
        }
        let bits = p.bits() as u32;
        Ok(GroupParams { p, q, g, bits })
    }

    /// Toy preset (p = 23, q = 11, g = 2): small enough to enumerate every
    /// tape in the exactness tests.
    pub fn toy() -> Self {
        GroupParams {
            p: BigUint::from(23u32),
            q: BigUint::from(11u32),
            g: BigUint::from(2u32),
            bits: 5,
        }
    }

    /// Demo preset with q just above 2^20: big enough that nothing is
    /// exhaustively enumerable, small enough that the brute-force hiding
    /// break stays feasible.
    pub fn demo() -> Self {
        GroupParams {
            p: BigUint::from(2_097_779u32),
            q: BigUint::from(1_048_889u32),
            g: BigUint::from(4u32),
            bits: 22,
        }
    }

    pub fn by_preset(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "demo" => Some(Self::demo()),
            _ => None,
        }
    }

    /// Search for a safe-prime group of exactly `bits` bits. Deterministic
    /// for a fixed seed: the starting point, the Miller-Rabin witnesses and
    /// the generator search all come from one derived tape.
    pub fn generate(bits: u32, seed: u64) -> Result<Self, GroupError> {
        if bits < 4 {
            return Err(GroupError::InvalidBits(bits));
        }
        let mut tape = Tape::derive(seed, "group-gen", u64::from(bits));
        let one = BigUint::one();
        let two = BigUint::from(2u32);
        // q ranges over [2^(bits-2), 2^(bits-1)) so that p = 2q+1 has
        // exactly `bits` bits.
        let q_low = BigUint::one() << (bits - 2);
        let q_high = BigUint::one() << (bits - 1);
        let mut q = tape.range(&q_low, &q_high);
        if q.is_even() {
            q += &one;
        }
        let budget = 200_000u64;
        for _ in 0..budget {
            if q >= q_high {
                q = q_low.clone() + &one;
                if q.is_even() {
                    q += &one;
                }
            }
            if is_probable_prime(&q, &mut tape) {
                let p = (&q << 1u32) + &one;
                if is_probable_prime(&p, &mut tape) {
                    // Squares generate the order-q subgroup; retry on 1.
                    let g = loop {
                        let x = tape.range(&two, &p);
                        let g = x.modpow(&two, &p);
                        if !g.is_one() {
                            break g;
                        }
                    };
                    return Ok(GroupParams { p, q, g, bits });
                }
            }
            q += &two;
        }
        Err(GroupError::SearchExhausted)
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Largest challenge width k with 2^k < q.
    pub fn max_challenge_bits(&self) -> u32 {
        let mut k = self.q.bits() as u32 - 1;
        while k > 1 && (BigUint::one() << k) >= self.q {
            k -= 1;
        }
        k
    }

    /// Requested challenge width clamped so 2^k < q always holds.
    pub fn challenge_bits_for(&self, requested: u32) -> u32 {
        requested.min(self.max_challenge_bits())
    }

    /// The canonical order-2 element p - 1. It lies outside the order-q
    /// subgroup (q is odd), so no discrete log to base g exists for it;
    /// the empty-claim leaf is built on it.
    pub fn non_member(&self) -> GroupElement {
        GroupElement(&self.p - BigUint::one())
    }

    pub fn scalar(&self, v: &BigUint) -> Result<Scalar, GroupError> {
        if v < &self.q {
            Ok(Scalar(v.clone()))
        } else {
            Err(GroupError::InvalidScalar(v.to_str_radix(16)))
        }
    }

    pub fn scalar_mod_q(&self, v: &BigUint) -> Scalar {
        Scalar(v.mod_floor(&self.q))
    }

    pub fn element(&self, v: &BigUint) -> Result<GroupElement, GroupError> {
        if !v.is_zero() && v < &self.p {
            Ok(GroupElement(v.clone()))
        } else {
            Err(GroupError::InvalidElement(v.to_str_radix(16)))
        }
    }

    /// True iff x is in the order-q subgroup: 1 <= x < p and x^q = 1.
    pub fn is_member(&self, x: &GroupElement) -> bool {
        !x.0.is_zero() && x.0 < self.p && x.0.modpow(&self.q, &self.p).is_one()
    }

    pub fn is_member_raw(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }

    pub fn exp(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    pub fn exp_g(&self, e: &Scalar) -> GroupElement {
        GroupElement(self.g.modpow(&e.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0).mod_floor(&self.p))
    }

    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        // a^(p-2) mod p; valid for any unit of Z_p^*.
        let e = &self.p - BigUint::from(2u32);
        GroupElement(a.0.modpow(&e, &self.p))
    }

    pub fn div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.mul(a, &self.inv(b))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0).mod_floor(&self.q))
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(((&a.0 + &self.q) - &b.0).mod_floor(&self.q))
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0).mod_floor(&self.q))
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        if a.0.is_zero() {
            Scalar(BigUint::zero())
        } else {
            Scalar(&self.q - &a.0)
        }
    }

    pub fn scalar_inv(&self, a: &Scalar) -> Result<Scalar, GroupError> {
        if a.0.is_zero() {
            return Err(GroupError::NonInvertible);
        }
        let e = &self.q - BigUint::from(2u32);
        Ok(Scalar(a.0.modpow(&e, &self.q)))
    }

    pub fn scalar_zero(&self) -> Scalar {
        Scalar(BigUint::zero())
    }

    pub fn random_scalar(&self, tape: &mut Tape) -> Scalar {
        Scalar(tape.below(&self.q))
    }

    /// Brute-force discrete log to base g: tries exponents 0, 1, ...,
    /// budget-1 and reports the first hit. Not-found is a value, not an
    /// error; it models an exhausted sub-exponential adversary.
    pub fn dlog_bruteforce(&self, target: &GroupElement, budget: u64) -> Option<Scalar> {
        let mut acc = BigUint::one();
        let mut e = BigUint::zero();
        let one = BigUint::one();
        let mut tried = 0u64;
        let q_u64 = u64::try_from(&self.q).unwrap_or(u64::MAX);
        let cap = budget.min(q_u64);
        while tried < cap {
            if acc == target.0 {
                return Some(Scalar(e));
            }
            acc = (&acc * &self.g).mod_floor(&self.p);
            e += &one;
            tried += 1;
        }
        None
    }
}

/// Miller-Rabin with 40 rounds of tape-drawn witnesses (error < 2^-80).
pub fn is_probable_prime(n: &BigUint, tape: &mut Tape) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    const SMALL: [u32; 15] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    for sp in SMALL {
        let spb = BigUint::from(sp);
        if n == &spb {
            return true;
        }
        if n.mod_floor(&spb).is_zero() {
            return false;
        }
    }
    // n - 1 = 2^s * d with d odd
    let n_minus_1 = n - &one;
    let mut d = n_minus_1.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1u32;
        s += 1;
    }
    let low = two.clone();
    let high = n_minus_1.clone();
    'witness: for _ in 0..40 {
        let a = tape.range(&low, &high);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
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

    fn toy() -> GroupParams {
        GroupParams::toy()
    }

    #[test]
    fn toy_power_table() {
        // Exhaustive oracle for everything on the toy group.
        let p = toy();
        let expected: [u64; 11] = [1, 2, 4, 8, 16, 9, 18, 13, 3, 6, 12];
        for (e, want) in expected.iter().enumerate() {
            let got = p.exp_g(&Scalar::from_u64(e as u64));
            assert_eq!(got, GroupElement::from_u64(*want));
        }
    }

    #[test]
    fn membership_from_power_table() {
        let p = toy();
        let members: [u64; 11] = [1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18];
        for v in 1..23u64 {
            let elem = GroupElement::from_u64(v);
            assert_eq!(p.is_member(&elem), members.contains(&v), "x = {v}");
        }
        assert!(p.is_member(&GroupElement::from_u64(8)));
        assert!(!p.is_member(&GroupElement::from_u64(5)));
        assert!(p.is_member(&GroupElement::from_u64(1)));
        assert!(!p.is_member_raw(&BigUint::zero()));
    }

    #[test]
    fn exp_examples() {
        let p = toy();
        assert_eq!(p.exp_g(&Scalar::from_u64(11 % 11)), GroupElement::from_u64(1));
        let g = p.generator();
        assert!(p.exp(&g, &p.scalar(&BigUint::from(7u32)).unwrap()) == GroupElement::from_u64(13));
    }

    #[test]
    fn scalar_inverse() {
        let p = toy();
        // 3 * 4 = 12 = 1 mod 11, found independently by exhaustive search
        let three = Scalar::from_u64(3);
        assert_eq!(p.scalar_inv(&three).unwrap(), Scalar::from_u64(4));
        for v in 1..11u64 {
            let s = Scalar::from_u64(v);
            let inv = p.scalar_inv(&s).unwrap();
            assert_eq!(p.scalar_mul(&s, &inv), Scalar::from_u64(1));
        }
        assert_eq!(p.scalar_inv(&p.scalar_zero()), Err(GroupError::NonInvertible));
    }

    #[test]
    fn dlog_bruteforce_examples() {
        let p = toy();
        assert_eq!(
            p.dlog_bruteforce(&GroupElement::from_u64(16), 11),
            Some(Scalar::from_u64(4))
        );
        assert_eq!(
            p.dlog_bruteforce(&GroupElement::from_u64(3), 11),
            Some(Scalar::from_u64(8))
        );
        // 13 = g^7 needs at least 8 trials
        assert_eq!(p.dlog_bruteforce(&GroupElement::from_u64(13), 3), None);
    }

    #[test]
    fn dlog_bruteforce_roundtrip_exhaustive_toy() {
        let p = toy();
        for e in 0..11u64 {
            let target = p.exp_g(&Scalar::from_u64(e));
            assert_eq!(p.dlog_bruteforce(&target, 11), Some(Scalar::from_u64(e)));
        }
    }

    #[test]
    fn dlog_bruteforce_roundtrip_sampled_demo() {
        let p = GroupParams::demo();
        let budget = u64::try_from(p.q()).unwrap();
        let mut tape = Tape::derive(31, "dlog-demo", 0);
        for _ in 0..8 {
            let e = p.random_scalar(&mut tape);
            let target = p.exp_g(&e);
            assert_eq!(p.dlog_bruteforce(&target, budget), Some(e));
        }
    }

    #[test]
    fn challenge_width_clamps_to_group() {
        let p = toy();
        assert_eq!(p.challenge_bits_for(128), 3);
        assert_eq!(p.challenge_bits_for(2), 2);
        assert_eq!(GroupParams::demo().challenge_bits_for(128), 20);
    }

    #[test]
    fn exp_composition_exhaustive_toy() {
        // exp(exp(x, a), b) == exp(x, a*b mod q) for all subgroup x and all a, b
        let p = toy();
        for xe in 0..11u64 {
            let x = p.exp_g(&Scalar::from_u64(xe));
            for a in 0..11u64 {
                for b in 0..11u64 {
                    let sa = Scalar::from_u64(a);
                    let sb = Scalar::from_u64(b);
                    let lhs = p.exp(&p.exp(&x, &sa), &sb);
                    let rhs = p.exp(&x, &p.scalar_mul(&sa, &sb));
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn members_of_exp_g_exhaustive() {
        let p = toy();
        for e in 0..11u64 {
            assert!(p.is_member(&p.exp_g(&Scalar::from_u64(e))));
        }
    }

    #[test]
    fn generate_bits5_is_toy_shape() {
        for seed in [1u64, 2, 3] {
            let p = GroupParams::generate(5, seed).unwrap();
            assert_eq!(p.p(), &BigUint::from(23u32));
            assert_eq!(p.q(), &BigUint::from(11u32));
            assert!(p.is_member(&p.generator()));
        }
    }

    #[test]
    fn generate_bits8_postconditions() {
        let mut mr = Tape::derive(99, "check", 0);
        let p = GroupParams::generate(8, 42).unwrap();
        assert_eq!(p.p().bits(), 8);
        assert_eq!(p.p(), &((p.q() << 1u32) + BigUint::one()));
        assert!(is_probable_prime(p.p(), &mut mr));
        assert!(is_probable_prime(p.q(), &mut mr));
        assert!(!p.generator().is_one());
        assert!(p.is_member(&p.generator()));
    }

    #[test]
    fn generate_is_deterministic() {
        let a = GroupParams::generate(16, 7).unwrap();
        let b = GroupParams::generate(16, 7).unwrap();
        assert_eq!(a, b);
        let c = GroupParams::generate(16, 8).unwrap();
        // different seeds normally land on different primes
        assert!(a != c || a.generator() != c.generator());
    }

    #[test]
    fn generate_rejects_tiny_bits() {
        assert_eq!(GroupParams::generate(3, 1), Err(GroupError::InvalidBits(3)));
    }

    #[test]
    fn from_parts_rejects_bad_inputs() {
        let p = BigUint::from(23u32);
        let q = BigUint::from(11u32);
        // composite modulus
        assert!(GroupParams::from_parts(BigUint::from(25u32), q.clone(), BigUint::from(2u32))
            .is_err());
        // p != 2q + 1
        assert!(GroupParams::from_parts(p.clone(), BigUint::from(7u32), BigUint::from(2u32))
            .is_err());
        // generator outside the order-q subgroup
        assert!(GroupParams::from_parts(p.clone(), q.clone(), BigUint::from(5u32)).is_err());
        // identity generator
        assert!(GroupParams::from_parts(p, q, BigUint::from(1u32)).is_err());
    }

    #[test]
    fn demo_preset_valid() {
        let p = GroupParams::demo();
        let round =
            GroupParams::from_parts(p.p().clone(), p.q().clone(), p.generator().value().clone())
                .unwrap();
        assert_eq!(round, p);
        assert_eq!(p.max_challenge_bits(), 20);
    }

    #[test]
    fn toy_challenge_width() {
        assert_eq!(GroupParams::toy().max_challenge_bits(), 3);
    }

    #[test]
    fn params_serde_roundtrip() {
        let p = GroupParams::demo();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"200273\""), "{json}");
        let back: GroupParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn hex_encoding_no_leading_zeros_lowercase() {
        let e = GroupElement::from_u64(0xabcdef);
        assert_eq!(e.to_hex(), "abcdef");
        assert_eq!(Scalar::from_u64(0).to_hex(), "0");
    }

    #[test]
    fn non_member_is_not_member() {
        for p in [GroupParams::toy(), GroupParams::demo()] {
            let nm = p.non_member();
            assert!(!p.is_member(&nm));
        }
    }
}
