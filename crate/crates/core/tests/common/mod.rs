//! Independent arithmetic for the p = 23, q = 11 group, written against
//! plain `u64` so it shares no code with the library.

#![allow(dead_code)]

use evercred_core::crypto::{Element, GroupParams, Scalar};

pub const P: u64 = 23;
pub const Q: u64 = 11;
pub const G: u64 = 2;
pub const H: u64 = 3;

pub fn pow(base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc
}

pub fn inv_q(a: u64) -> u64 {
    assert!(!a.is_multiple_of(Q));
    pow(a, Q - 2, Q)
}

pub fn ocommit(x: u64, r: u64) -> u64 {
    pow(G, x % Q, P) * pow(H, r % Q, P) % P
}

/// Discrete log base `g`, by search.
pub fn dlog_g(e: u64) -> Option<u64> {
    (0..Q).find(|&k| pow(G, k, P) == e)
}

pub fn subgroup() -> Vec<u64> {
    let mut v: Vec<u64> = (0..Q).map(|k| pow(G, k, P)).collect();
    v.sort_unstable();
    v
}

pub fn elgamal_encrypt(pk: u64, m: u64, r: u64) -> (u64, u64) {
    (pow(G, r, P), m * pow(pk, r, P) % P)
}

pub fn el(params: &GroupParams, v: u64) -> Element {
    params.decode_element(&[v as u8]).expect("subgroup element")
}

pub fn sc(params: &GroupParams, v: u64) -> Scalar {
    params.scalar(v)
}

pub fn val_e(e: &Element) -> u64 {
    u64::try_from(e.value()).expect("small element")
}

pub fn val_s(s: &Scalar) -> u64 {
    u64::try_from(s.value()).expect("small scalar")
}

/// SHA-256 counter-mode expansion of `len32(tag) || tag || counter32 || data`
/// to 17 bytes (one scalar byte plus 16), reduced mod `Q` digit by digit.
pub fn ohash(tag: &str, data: &[u8]) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    h.update(0u32.to_be_bytes());
    h.update(data);
    h.finalize()[..17].iter().fold(0u64, |acc, &b| (acc * 256 + u64::from(b)) % Q)
}

pub fn ohash_identity(vid: &str) -> u64 {
    ohash("evercred/v1/identity", vid.as_bytes())
}

/// Schnorr over the toy group: `e = H(g^k || p || msg)`, `z = k + e*s`.
pub fn osign(s: u64, k: u64, msg: &[u8]) -> (u64, u64) {
    let p = pow(G, s, P);
    let mut input = vec![pow(G, k, P) as u8, p as u8];
    input.extend_from_slice(msg);
    let e = ohash("evercred/v1/schnorr-challenge", &input);
    (e, (k + e * s) % Q)
}

pub fn overify(p: u64, msg: &[u8], (e, z): (u64, u64)) -> bool {
    if !subgroup().contains(&p) || e >= Q || z >= Q {
        return false;
    }
    let r = pow(G, z, P) * pow(p, Q - e, P) % P;
    let mut input = vec![r as u8, p as u8];
    input.extend_from_slice(msg);
    ohash("evercred/v1/schnorr-challenge", &input) == e
}
