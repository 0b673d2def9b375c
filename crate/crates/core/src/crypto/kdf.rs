//! Passcodes and the secrets derived from them.
//!
//! A passcode is 20 Crockford base32 characters (100 bits) in groups of four.
//! HKDF-SHA256 expands it into a 32-byte sealing key and a login password
//! under distinct labels.

use std::fmt;

use hkdf::Hkdf;
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, Zeroizing};

const PASSCODE_ALPHABET: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const PASSCODE_CHARS: usize = 20;

const KDF_SALT: &[u8] = b"evercred/v1/passcode-kdf";
const SEAL_KEY_LABEL: &[u8] = b"evercred/v1/seal-key";
const LOGIN_PASSWORD_LABEL: &[u8] = b"evercred/v1/login-password";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PasscodeError {
    #[error("passcode must not be empty")]
    Empty,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Passcode(Zeroizing<String>);

impl fmt::Debug for Passcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Passcode(..)")
    }
}

impl Passcode {
    pub fn new(value: impl Into<String>) -> Result<Self, PasscodeError> {
        let value = value.into();
        if value.is_empty() {
            return Err(PasscodeError::Empty);
        }
        Ok(Passcode(Zeroizing::new(value)))
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut out = String::with_capacity(PASSCODE_CHARS + PASSCODE_CHARS / 4);
        for i in 0..PASSCODE_CHARS {
            if i > 0 && i % 4 == 0 {
                out.push('-');
            }
            out.push(PASSCODE_ALPHABET[rng.gen_range(0..32)] as char);
        }
        Passcode(Zeroizing::new(out))
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl Zeroize for Passcode {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SealKey(#[serde(with = "hex_array")] Zeroizing<[u8; 32]>);

impl fmt::Debug for SealKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SealKey(..)")
    }
}

impl SealKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SealKey(Zeroizing::new(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl Zeroize for SealKey {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

/// A login password: 32 lowercase hex characters.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoginPassword(Zeroizing<String>);

impl fmt::Debug for LoginPassword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LoginPassword(..)")
    }
}

impl LoginPassword {
    pub fn new(value: impl Into<String>) -> Self {
        LoginPassword(Zeroizing::new(value.into()))
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        LoginPassword::new(hex::encode(bytes))
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl Zeroize for LoginPassword {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

#[derive(Clone, Debug, Zeroize)]
pub struct DerivedSecrets {
    pub seal_key: SealKey,
    pub login_password: LoginPassword,
}

/// Deterministically derives the sealing key and the login password from `passcode`.
pub fn derive_from_passcode(passcode: &Passcode) -> DerivedSecrets {
    let hk = Hkdf::<Sha256>::new(Some(KDF_SALT), passcode.expose().as_bytes());
    let mut key = [0u8; 32];
    hk.expand(SEAL_KEY_LABEL, &mut key).expect("32 bytes is a valid HKDF length");
    let mut pw = Zeroizing::new([0u8; 16]);
    hk.expand(LOGIN_PASSWORD_LABEL, pw.as_mut()).expect("16 bytes is a valid HKDF length");
    let secrets = DerivedSecrets {
        seal_key: SealKey::from_bytes(key),
        login_password: LoginPassword::new(hex::encode(pw.as_ref())),
    };
    key.zeroize();
    secrets
}

/// Salted SHA-256 of a login password. Passwords here are machine-generated
/// with at least 128 bits of entropy, so no work factor is applied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordVerifier {
    #[serde(with = "hex::serde")]
    salt: [u8; 16],
    #[serde(with = "hex::serde")]
    digest: [u8; 32],
}

impl PasswordVerifier {
    pub fn new<R: RngCore + CryptoRng>(password: &LoginPassword, rng: &mut R) -> Self {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        PasswordVerifier { digest: Self::hash(&salt, password.expose()), salt }
    }

    pub fn verify(&self, candidate: &str) -> bool {
        Self::hash(&self.salt, candidate) == self.digest
    }

    fn hash(salt: &[u8; 16], password: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"evercred/v1/password-hash");
        hasher.update(salt);
        hasher.update(password.as_bytes());
        hasher.finalize().into()
    }
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};
    use zeroize::Zeroizing;

    pub fn serialize<S: Serializer>(v: &Zeroizing<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v.as_ref()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Zeroizing<[u8; 32]>, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Zeroizing::new(out))
    }
}
