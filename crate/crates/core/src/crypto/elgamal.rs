//! ElGamal encryption of voting choices.
//!
//! Choices are mapped to group elements through a public [`Codebook`]:
//! choice `i` encodes as `g^(i+1)`. Encryption takes the randomness explicitly
//! so that a ballot can be re-derived from `(pk, m, r)` during an audit.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use super::group::{Element, GroupError, GroupParams, Scalar};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ElGamalError {
    #[error("ciphertext component outside the order-q subgroup")]
    MalformedCiphertext,
    #[error("choice index {index} outside codebook of size {size}")]
    InvalidChoice { index: usize, size: usize },
    #[error("codebook of size {size} does not fit the group (at most {max})")]
    CodebookTooLarge { size: usize, max: usize },
    #[error("codebook must contain at least one choice")]
    EmptyCodebook,
    #[error(transparent)]
    Encoding(#[from] GroupError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    pub c1: Element,
    pub c2: Element,
}

impl Ciphertext {
    /// `c1 || c2`, each fixed-width.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = params.encode_element(&self.c1);
        out.extend(params.encode_element(&self.c2));
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, ElGamalError> {
        let n = params.element_len();
        if bytes.len() != 2 * n {
            return Err(GroupError::BadLength { expected: 2 * n, actual: bytes.len() }.into());
        }
        Ok(Ciphertext { c1: params.decode_element(&bytes[..n])?, c2: params.decode_element(&bytes[n..])? })
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct ElGamalKeypair {
    secret: Scalar,
    public: Element,
}

impl std::fmt::Debug for ElGamalKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ElGamalKeypair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl ElGamalKeypair {
    pub fn generate<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Self {
        Self::from_secret(params, params.random_nonzero_scalar(rng))
    }

    pub fn from_secret(params: &GroupParams, secret: Scalar) -> Self {
        let public = params.exp(params.g(), &secret);
        ElGamalKeypair { secret, public }
    }

    pub fn public(&self) -> &Element {
        &self.public
    }

    pub fn secret(&self) -> &Scalar {
        &self.secret
    }
}

impl Zeroize for ElGamalKeypair {
    fn zeroize(&mut self) {
        self.secret.zeroize();
    }
}

/// `(g^r, m * pk^r)`.
pub fn encrypt(params: &GroupParams, pk: &Element, m: &Element, r: &Scalar) -> Ciphertext {
    Ciphertext { c1: params.exp(params.g(), r), c2: params.mul(m, &params.exp(pk, r)) }
}

pub fn decrypt(params: &GroupParams, sk: &Scalar, ct: &Ciphertext) -> Result<Element, ElGamalError> {
    if !params.is_member(&ct.c1) || !params.is_member(&ct.c2) {
        return Err(ElGamalError::MalformedCiphertext);
    }
    // c2 / c1^sk = c2 * c1^(q - sk)
    let mask_inv = params.exp(&ct.c1, &params.scalar_neg(sk));
    Ok(params.mul(&ct.c2, &mask_inv))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    entries: Vec<Element>,
}

impl Codebook {
    /// `choices` distinct non-identity elements `g^1, ..., g^choices`.
    pub fn new(params: &GroupParams, choices: usize) -> Result<Self, ElGamalError> {
        if choices == 0 {
            return Err(ElGamalError::EmptyCodebook);
        }
        // g^1 .. g^(q-1) are distinct and nonzero; bound by a small constant too.
        let max = usize::try_from(params.order() - 1u32).unwrap_or(usize::MAX).min(1 << 16);
        if choices > max {
            return Err(ElGamalError::CodebookTooLarge { size: choices, max });
        }
        let mut entries = Vec::with_capacity(choices);
        let mut acc = params.g().clone();
        for _ in 0..choices {
            entries.push(acc.clone());
            acc = params.mul(&acc, params.g());
        }
        Ok(Codebook { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self, index: usize) -> Result<&Element, ElGamalError> {
        self.entries.get(index).ok_or(ElGamalError::InvalidChoice { index, size: self.entries.len() })
    }

    pub fn decode(&self, m: &Element) -> Option<usize> {
        self.entries.iter().position(|e| e == m)
    }

    pub fn entries(&self) -> &[Element] {
        &self.entries
    }
}
