//! Schnorr signatures over the commitment group.
//!
//! Keys: `s ∈ [1, q)`, `p = g^s`. A signature on `msg` is `(e, z)` with
//! `R = g^k`, `e = H(R || p || msg)`, `z = k + e·s`, where the nonce `k` is
//! derived deterministically from `s` and `msg`. Verification recomputes
//! `R' = g^z · p^(-e)` and checks `H(R' || p || msg) = e`.
//!
//! The encoded signature is `e || z`, both fixed-width scalars.

use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use super::group::{Element, GroupError, GroupParams, HashDomain, Scalar};

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SigningKey(Scalar);

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

impl Zeroize for SigningKey {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerifyingKey(Element);

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    challenge: Scalar,
    response: Scalar,
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Self {
        SigningKey(params.random_nonzero_scalar(rng))
    }

    pub fn from_scalar(s: Scalar) -> Result<Self, GroupError> {
        if s.is_zero() {
            return Err(GroupError::ScalarOutOfRange);
        }
        Ok(SigningKey(s))
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }

    pub fn verifying_key(&self, params: &GroupParams) -> VerifyingKey {
        VerifyingKey(params.exp(params.g(), &self.0))
    }

    pub fn sign(&self, params: &GroupParams, msg: &[u8]) -> Signature {
        let public = self.verifying_key(params);
        let nonce = self.nonce(params, msg);
        let commitment = params.exp(params.g(), &nonce);
        let challenge = challenge(params, &commitment, &public, msg);
        let response = params.scalar_add(&nonce, &params.scalar_mul(&challenge, &self.0));
        Signature { challenge, response }
    }

    fn nonce(&self, params: &GroupParams, msg: &[u8]) -> Scalar {
        let mut input = params.encode_scalar(&self.0);
        input.extend_from_slice(msg);
        input.extend_from_slice(&[0u8; 4]);
        let counter_at = input.len() - 4;
        for counter in 0u32.. {
            input[counter_at..].copy_from_slice(&counter.to_be_bytes());
            let k = params.hash_to_scalar(HashDomain::SignatureNonce, &input);
            if !k.is_zero() {
                return k;
            }
        }
        unreachable!("nonce derivation exhausted u32 counter")
    }
}

impl VerifyingKey {
    pub fn from_element(params: &GroupParams, e: Element) -> Result<Self, GroupError> {
        if !params.is_member(&e) {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(VerifyingKey(e))
    }

    pub fn element(&self) -> &Element {
        &self.0
    }

    pub fn verify(&self, params: &GroupParams, msg: &[u8], sig: &Signature) -> bool {
        if !params.is_member(&self.0) {
            return false;
        }
        let recovered = params
            .mul(&params.exp(params.g(), &sig.response), &params.exp(&self.0, &params.scalar_neg(&sig.challenge)));
        challenge(params, &recovered, self, msg) == sig.challenge
    }

    /// Verification against an encoded signature; malformed encodings verify false.
    pub fn verify_bytes(&self, params: &GroupParams, msg: &[u8], sig: &[u8]) -> bool {
        match Signature::from_bytes(params, sig) {
            Ok(sig) => self.verify(params, msg, &sig),
            Err(_) => false,
        }
    }
}

impl Signature {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = params.encode_scalar(&self.challenge);
        out.extend(params.encode_scalar(&self.response));
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, GroupError> {
        let n = params.scalar_len();
        if bytes.len() != 2 * n {
            return Err(GroupError::BadLength { expected: 2 * n, actual: bytes.len() });
        }
        Ok(Signature { challenge: params.decode_scalar(&bytes[..n])?, response: params.decode_scalar(&bytes[n..])? })
    }
}

fn challenge(params: &GroupParams, commitment: &Element, public: &VerifyingKey, msg: &[u8]) -> Scalar {
    let mut input = params.encode_element(commitment);
    input.extend(params.encode_element(&public.0));
    input.extend_from_slice(msg);
    params.hash_to_scalar(HashDomain::SignatureChallenge, &input)
}
