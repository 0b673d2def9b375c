//! Authenticated encryption of a voter's signing key and reference opening
//! under a passcode-derived key (ChaCha20-Poly1305).
//!
//! Each blob is `nonce(12) || ciphertext || tag(16)`. The two blobs carry
//! different associated data so they cannot be swapped.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::group::{GroupParams, Scalar};
use super::kdf::SealKey;
use super::signature::SigningKey;

const AAD_SIGNING_KEY: &[u8] = b"evercred/v1/sealed/signing-key";
const AAD_OPENING: &[u8] = b"evercred/v1/sealed/reference-opening";
const NONCE_LEN: usize = 12;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SealError {
    #[error("sealed credentials failed the integrity check")]
    Integrity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedCredentials {
    #[serde(with = "hex::serde")]
    pub signing_key: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub opening: Vec<u8>,
}

pub fn seal<R: RngCore + CryptoRng>(
    params: &GroupParams,
    key: &SealKey,
    signing_key: &SigningKey,
    opening: &Scalar,
    rng: &mut R,
) -> SealedCredentials {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
    let s = Zeroizing::new(params.encode_scalar(signing_key.scalar()));
    let t = Zeroizing::new(params.encode_scalar(opening));
    SealedCredentials {
        signing_key: seal_one(&cipher, &s, AAD_SIGNING_KEY, rng),
        opening: seal_one(&cipher, &t, AAD_OPENING, rng),
    }
}

pub fn unseal(
    params: &GroupParams,
    key: &SealKey,
    sealed: &SealedCredentials,
) -> Result<(SigningKey, Scalar), SealError> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
    let s = open_one(&cipher, &sealed.signing_key, AAD_SIGNING_KEY)?;
    let t = open_one(&cipher, &sealed.opening, AAD_OPENING)?;
    // An authentic blob holding an out-of-range scalar can only come from a
    // broken sealer; report it the same way.
    let s = params.decode_scalar(&s).map_err(|_| SealError::Integrity)?;
    let s = SigningKey::from_scalar(s).map_err(|_| SealError::Integrity)?;
    let t = params.decode_scalar(&t).map_err(|_| SealError::Integrity)?;
    Ok((s, t))
}

fn seal_one<R: RngCore + CryptoRng>(cipher: &ChaCha20Poly1305, msg: &[u8], aad: &[u8], rng: &mut R) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg, aad })
        .expect("ChaCha20-Poly1305 encryption is infallible for short inputs");
    let mut out = nonce.to_vec();
    out.extend(ct);
    out
}

fn open_one(cipher: &ChaCha20Poly1305, blob: &[u8], aad: &[u8]) -> Result<Zeroizing<Vec<u8>>, SealError> {
    if blob.len() < NONCE_LEN {
        return Err(SealError::Integrity);
    }
    let (nonce, ct) = blob.split_at(NONCE_LEN);
    cipher
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map(Zeroizing::new)
        .map_err(|_| SealError::Integrity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::kdf::{derive_from_passcode, Passcode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    #[test]
    fn roundtrip_wrong_key_and_tamper() {
        let params = GroupParams::production();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let s = SigningKey::generate(&params, &mut rng);
        let t = params.random_scalar(&mut rng);
        let k = derive_from_passcode(&Passcode::generate(&mut rng)).seal_key;
        let k2 = derive_from_passcode(&Passcode::generate(&mut rng)).seal_key;

        let sealed = seal(&params, &k, &s, &t, &mut rng);
        let (s2, t2) = unseal(&params, &k, &sealed).unwrap();
        assert_eq!(s2, s);
        assert_eq!(t2, t);
        assert_eq!(unseal(&params, &k2, &sealed), Err(SealError::Integrity));

        let mut tampered = sealed.clone();
        tampered.opening[20] ^= 1;
        assert_eq!(unseal(&params, &k, &tampered), Err(SealError::Integrity));

        let swapped = SealedCredentials { signing_key: sealed.opening.clone(), opening: sealed.signing_key.clone() };
        assert_eq!(unseal(&params, &k, &swapped), Err(SealError::Integrity));
        let truncated = SealedCredentials { signing_key: vec![1, 2, 3], opening: sealed.opening.clone() };
        assert_eq!(unseal(&params, &k, &truncated), Err(SealError::Integrity));
    }

    #[test]
    fn fresh_nonce_per_seal() {
        let params = GroupParams::test_small();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let s = SigningKey::generate(&params, &mut rng);
        let t = params.random_scalar(&mut rng);
        let k = derive_from_passcode(&Passcode::generate(&mut rng)).seal_key;
        let mut blobs = HashSet::new();
        for _ in 0..1000 {
            let sealed = seal(&params, &k, &s, &t, &mut rng);
            assert!(blobs.insert(sealed.signing_key.clone()));
            assert!(blobs.insert(sealed.opening.clone()));
            let (s2, t2) = unseal(&params, &k, &sealed).unwrap();
            assert_eq!((s2, t2), (s.clone(), t.clone()));
        }
    }
}
