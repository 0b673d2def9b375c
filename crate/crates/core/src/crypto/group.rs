//! Prime-order subgroups of `Z_p^*` and their scalar field `Z_q`.
//!
//! Two parameter profiles are built in:
//!
//! * `test-small`: `p = 23`, `q = 11`, `g = 2`, `h = 3`. The discrete log of `h`
//!   to base `g` is known (`2^8 = 3 mod 23`) and kept as a trapdoor so that
//!   commitment equivocation and exhaustive enumeration are possible.
//! * `production`: the 2048-bit MODP group of RFC 3526 (group 14), `q = (p-1)/2`,
//!   `g = 2`. The second generator `h` is derived by hashing a fixed public seed
//!   into the group (see [`GroupParams::production`]); nobody knows `log_g h`.
//!
//! Encodings are fixed-width big-endian: group elements use the byte length of
//! `p`, scalars the byte length of `q`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use zeroize::Zeroize;

const RFC3526_MODP_2048: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1",
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD",
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245",
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D",
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F",
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D",
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9",
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510",
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
);

/// Public seed hashed into the production group to obtain `h`.
pub const PRODUCTION_H_SEED: &[u8] = b"evercred/v1/production/generator-h";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("encoding has length {actual}, expected {expected}")]
    BadLength { expected: usize, actual: usize },
    #[error("value is not an element of the order-q subgroup")]
    NotInSubgroup,
    #[error("scalar is not reduced modulo q")]
    ScalarOutOfRange,
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    TestSmall,
    Production,
    /// Parameters read from a file header rather than built in.
    Custom,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::TestSmall => "test-small",
            Profile::Production => "production",
            Profile::Custom => "custom",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test-small" => Ok(Profile::TestSmall),
            "production" => Ok(Profile::Production),
            "custom" => Ok(Profile::Custom),
            other => Err(GroupError::UnknownProfile(other.to_string())),
        }
    }
}

/// Domain-separation tags for every hash-to-scalar use site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashDomain {
    /// Voter identifiers entering a commitment.
    Identity,
    SignatureChallenge,
    SignatureNonce,
    /// Statistical tests and ad-hoc callers.
    Test,
}

impl HashDomain {
    fn tag(self) -> &'static [u8] {
        match self {
            HashDomain::Identity => b"evercred/v1/identity",
            HashDomain::SignatureChallenge => b"evercred/v1/schnorr-challenge",
            HashDomain::SignatureNonce => b"evercred/v1/schnorr-nonce",
            HashDomain::Test => b"evercred/v1/test",
        }
    }
}

/// An integer in `[0, q)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Minimal big-endian hex, the form that appears in state dumps.
    pub fn minimal_hex(&self) -> String {
        hex::encode(self.0.to_bytes_be())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(0x{})", self.minimal_hex())
    }
}

impl Zeroize for Scalar {
    fn zeroize(&mut self) {
        // Drops the limbs; best-effort only (side-channel hardening is out of scope).
        self.0.set_zero();
    }
}

/// An element of the order-`q` subgroup of `Z_p^*`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(BigUint);

impl Element {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Element(0x{})", hex::encode(self.0.to_bytes_be()))
    }
}

macro_rules! hex_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&hex::encode(self.0.to_bytes_be()))
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
                Ok($ty(BigUint::from_bytes_be(&bytes)))
            }
        }
    };
}

hex_serde!(Scalar);
hex_serde!(Element);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    profile: Profile,
    modulus: BigUint,
    order: BigUint,
    g: Element,
    h: Element,
    trapdoor: Option<Scalar>,
    element_len: usize,
    scalar_len: usize,
}

impl GroupParams {
    /// `p = 23, q = 11, g = 2, h = 3` with trapdoor `α = 8`.
    pub fn test_small() -> Self {
        Self::build(
            Profile::TestSmall,
            BigUint::from(23u32),
            BigUint::from(11u32),
            BigUint::from(2u32),
            BigUint::from(3u32),
            Some(BigUint::from(8u32)),
        )
        .expect("built-in test-small parameters are valid")
    }

    /// RFC 3526 group 14 with `g = 2`.
    ///
    /// `h` is computed as follows: for `counter = 0, 1, ...`, expand
    /// `PRODUCTION_H_SEED || counter_be32` with SHA-256 in counter mode to
    /// `len(p) + 16` bytes, reduce modulo `p` and square. The first result
    /// that is neither 0 nor 1 is `h`. Squaring lands in the quadratic
    /// residues, which is exactly the order-`q` subgroup of a safe-prime group.
    pub fn production() -> Self {
        let modulus = BigUint::parse_bytes(RFC3526_MODP_2048.as_bytes(), 16).expect("RFC 3526 modulus parses");
        let order = (&modulus - 1u32) >> 1;
        let element_len = byte_len(&modulus);
        let mut counter = 0u32;
        let h = loop {
            let mut seed = PRODUCTION_H_SEED.to_vec();
            seed.extend_from_slice(&counter.to_be_bytes());
            let wide = expand_sha256(b"evercred/v1/hash-to-group", &seed, element_len + 16);
            let candidate = BigUint::from_bytes_be(&wide) % &modulus;
            let h = candidate.modpow(&BigUint::from(2u32), &modulus);
            if !h.is_zero() && !h.is_one() {
                break h;
            }
            counter += 1;
        };
        Self::build(Profile::Production, modulus, order, BigUint::from(2u32), h, None)
            .expect("built-in production parameters are valid")
    }

    pub fn for_profile(profile: Profile) -> Option<Self> {
        match profile {
            Profile::TestSmall => Some(Self::test_small()),
            Profile::Production => Some(Self::production()),
            Profile::Custom => None,
        }
    }

    /// Parameters without a trapdoor, e.g. read from a published registry header.
    ///
    /// Only subgroup membership of `g` and `h` is checked; primality of `p` and
    /// `q` is the publisher's responsibility.
    pub fn custom(modulus: BigUint, order: BigUint, g: BigUint, h: BigUint) -> Result<Self, GroupError> {
        let profile = if modulus == BigUint::from(23u32) && order == BigUint::from(11u32) {
            Profile::TestSmall
        } else {
            Profile::Custom
        };
        let mut params = Self::build(profile, modulus, order, g, h, None)?;
        if params.profile == Profile::TestSmall && params != Self::test_small().without_trapdoor() {
            params.profile = Profile::Custom;
        }
        if params.profile == Profile::Custom && params.modulus.bits() == 2048 {
            let candidate = GroupParams { profile: Profile::Production, ..params.clone() };
            if candidate == Self::production() {
                params = candidate;
            }
        }
        Ok(params)
    }

    fn build(
        profile: Profile,
        modulus: BigUint,
        order: BigUint,
        g: BigUint,
        h: BigUint,
        trapdoor: Option<BigUint>,
    ) -> Result<Self, GroupError> {
        if modulus <= BigUint::from(3u32) || order <= BigUint::one() {
            return Err(GroupError::InvalidParams("modulus and order too small"));
        }
        if !((&modulus - 1u32) % &order).is_zero() {
            return Err(GroupError::InvalidParams("q does not divide p - 1"));
        }
        let params = GroupParams {
            profile,
            element_len: byte_len(&modulus),
            scalar_len: byte_len(&order),
            modulus,
            order,
            g: Element(g),
            h: Element(h),
            trapdoor: None,
        };
        for (gen, what) in [(&params.g, "g"), (&params.h, "h")] {
            if gen.0.is_one() || !params.is_member(gen) {
                return Err(GroupError::InvalidParams(if what == "g" {
                    "g is not a non-identity subgroup element"
                } else {
                    "h is not a non-identity subgroup element"
                }));
            }
        }
        if params.g == params.h {
            return Err(GroupError::InvalidParams("g and h coincide"));
        }
        let mut params = params;
        if let Some(alpha) = trapdoor {
            let alpha = params.scalar(alpha);
            if params.exp(&params.g, &alpha) != params.h {
                return Err(GroupError::InvalidParams("trapdoor does not satisfy g^alpha = h"));
            }
            params.trapdoor = Some(alpha);
        }
        Ok(params)
    }

    pub fn without_trapdoor(&self) -> Self {
        GroupParams { trapdoor: None, ..self.clone() }
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn g(&self) -> &Element {
        &self.g
    }

    pub fn h(&self) -> &Element {
        &self.h
    }

    /// `log_g h`, present only in the test-small profile.
    pub fn trapdoor(&self) -> Option<&Scalar> {
        self.trapdoor.as_ref()
    }

    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub fn scalar(&self, value: impl Into<BigUint>) -> Scalar {
        Scalar(value.into() % &self.order)
    }

    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        // Rejection sampling over the bit length of q gives an exactly uniform value.
        let bits = self.order.bits();
        let mut buf = vec![0u8; self.scalar_len];
        let excess = (self.scalar_len as u64) * 8 - bits;
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= 0xff >> excess;
            let candidate = BigUint::from_bytes_be(&buf);
            if candidate < self.order {
                return Scalar(candidate);
            }
        }
    }

    pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = self.random_scalar(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.order)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &self.order - &b.0) % &self.order)
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.order)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        Scalar((&self.order - &a.0) % &self.order)
    }

    /// Inverse modulo the prime `q`, via Fermat.
    pub fn scalar_inv(&self, a: &Scalar) -> Option<Scalar> {
        if a.is_zero() {
            return None;
        }
        Some(Scalar(a.0.modpow(&(&self.order - 2u32), &self.order)))
    }

    pub fn identity(&self) -> Element {
        Element(BigUint::one())
    }

    pub fn exp(&self, base: &Element, e: &Scalar) -> Element {
        Element(base.0.modpow(&e.0, &self.modulus))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        Element((&a.0 * &b.0) % &self.modulus)
    }

    pub fn is_member(&self, e: &Element) -> bool {
        !e.0.is_zero() && e.0 < self.modulus && e.0.modpow(&self.order, &self.modulus).is_one()
    }

    /// Every element of the subgroup, in order `g^0, g^1, ...`. Only sensible
    /// for toy parameters; returns `None` above 2^16 elements.
    pub fn enumerate_subgroup(&self) -> Option<Vec<Element>> {
        if self.order > BigUint::from(1u32 << 16) {
            return None;
        }
        let mut out = Vec::new();
        let mut acc = self.identity();
        let mut i = BigUint::zero();
        while i < self.order {
            out.push(acc.clone());
            acc = self.mul(&acc, &self.g);
            i += 1u32;
        }
        Some(out)
    }

    pub fn encode_element(&self, e: &Element) -> Vec<u8> {
        left_pad(&e.0.to_bytes_be(), self.element_len)
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<Element, GroupError> {
        if bytes.len() != self.element_len {
            return Err(GroupError::BadLength { expected: self.element_len, actual: bytes.len() });
        }
        let e = Element(BigUint::from_bytes_be(bytes));
        if !self.is_member(&e) {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(e)
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0.to_bytes_be(), self.scalar_len)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.scalar_len {
            return Err(GroupError::BadLength { expected: self.scalar_len, actual: bytes.len() });
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= self.order {
            return Err(GroupError::ScalarOutOfRange);
        }
        Ok(Scalar(v))
    }

    pub fn element_hex(&self, e: &Element) -> String {
        hex::encode(self.encode_element(e))
    }

    pub fn scalar_hex(&self, s: &Scalar) -> String {
        hex::encode(self.encode_scalar(s))
    }

    pub fn element_from_hex(&self, s: &str) -> Result<Element, GroupError> {
        self.decode_element(&hex::decode(s).map_err(|e| GroupError::Hex(e.to_string()))?)
    }

    pub fn scalar_from_hex(&self, s: &str) -> Result<Scalar, GroupError> {
        self.decode_scalar(&hex::decode(s).map_err(|e| GroupError::Hex(e.to_string()))?)
    }

    /// Hashes `data` into `Z_q`.
    ///
    /// SHA-256 in counter mode expands `len32(tag) || tag || counter32 || data`
    /// to `len(q) + 16` bytes, which are then reduced modulo `q`. The 128 extra
    /// bits make the reduction bias negligible.
    pub fn hash_to_scalar(&self, domain: HashDomain, data: &[u8]) -> Scalar {
        let wide = expand_sha256(domain.tag(), data, self.scalar_len + 16);
        Scalar(BigUint::from_bytes_be(&wide) % &self.order)
    }

    /// The scalar a voter identifier commits to.
    pub fn identity_scalar(&self, vid: &str) -> Scalar {
        self.hash_to_scalar(HashDomain::Identity, vid.as_bytes())
    }
}

fn byte_len(v: &BigUint) -> usize {
    v.bits().div_ceil(8) as usize
}

fn left_pad(bytes: &[u8], len: usize) -> Vec<u8> {
    debug_assert!(bytes.len() <= len);
    let mut out = vec![0u8; len - bytes.len()];
    out.extend_from_slice(bytes);
    out
}

fn expand_sha256(tag: &[u8], data: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_len + 32);
    let mut counter = 0u32;
    while out.len() < out_len {
        let mut hasher = Sha256::new();
        hasher.update((tag.len() as u32).to_be_bytes());
        hasher.update(tag);
        hasher.update(counter.to_be_bytes());
        hasher.update(data);
        out.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    out.truncate(out_len);
    out
}
