//! Types shared by every protocol participant, and their canonical encodings.
//!
//! * Ballot signing message: `c1 || c2 || rho`.
//! * Canonical ballot encoding: `c1 || c2 || rho || e || z`, which is also the
//!   message the server signs in an acknowledgement.
//! * Ballot fingerprint: SHA-256 of the canonical ballot encoding.
//!
//! All components are fixed-width big-endian (see [`crate::crypto::group`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::Zeroize;

use crate::crypto::{Ciphertext, Commitment, GroupParams, LoginPassword, Scalar, Signature, SigningKey, VerifyingKey};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VoterIdError {
    #[error("voter identifier must not be empty")]
    Empty,
    #[error("voter identifier {0:?} contains a reserved character")]
    ReservedCharacter(String),
}

/// A publicly known voter identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoterId(String);

impl VoterId {
    pub fn new(value: impl Into<String>) -> Result<Self, VoterIdError> {
        let value = value.into();
        if value.is_empty() {
            return Err(VoterIdError::Empty);
        }
        if value.contains([',', '\n', '\r', ':', '#']) {
            return Err(VoterIdError::ReservedCharacter(value));
        }
        Ok(VoterId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VoterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for VoterId {
    type Err = VoterIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VoterId::new(s)
    }
}

/// The randomness `t` of a voter's anonymized reference.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceOpening(Scalar);

impl fmt::Debug for ReferenceOpening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ReferenceOpening(..)")
    }
}

impl ReferenceOpening {
    pub fn new(t: Scalar) -> Self {
        ReferenceOpening(t)
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }
}

impl Zeroize for ReferenceOpening {
    fn zeroize(&mut self) {
        self.0.zeroize();
    }
}

/// The anonymized voter reference `rho = Comm(H(vid), t)`.
pub type AnonymizedReference = Commitment;

/// A voter's secret credentials: signing key `s` and reference opening `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoterSecrets {
    pub signing_key: SigningKey,
    pub opening: ReferenceOpening,
}

impl Zeroize for VoterSecrets {
    fn zeroize(&mut self) {
        self.signing_key.zeroize();
        self.opening.zeroize();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ballot {
    pub ciphertext: Ciphertext,
    pub reference: AnonymizedReference,
    pub signature: Signature,
}

impl Ballot {
    pub fn signing_message(params: &GroupParams, ciphertext: &Ciphertext, reference: &AnonymizedReference) -> Vec<u8> {
        let mut msg = ciphertext.to_bytes(params);
        msg.extend(params.encode_element(reference.element()));
        msg
    }

    pub fn canonical_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Self::signing_message(params, &self.ciphertext, &self.reference);
        out.extend(self.signature.to_bytes(params));
        out
    }

    pub fn fingerprint(&self, params: &GroupParams) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes(params)).into()
    }

    pub fn signature_valid(&self, params: &GroupParams, key: &VerifyingKey) -> bool {
        key.verify(params, &Self::signing_message(params, &self.ciphertext, &self.reference), &self.signature)
    }
}

/// A public registry record `(p, rho)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub verifying_key: VerifyingKey,
    pub reference: AnonymizedReference,
}

impl RegistryRecord {
    /// `p_hex,rho_hex`
    pub fn to_line(&self, params: &GroupParams) -> String {
        format!("{},{}", params.element_hex(self.verifying_key.element()), params.element_hex(self.reference.element()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotBoxEntry {
    pub seq: u64,
    pub ballot: Ballot,
    /// Logical server clock at acceptance.
    pub accepted_at: u64,
}

impl BallotBoxEntry {
    /// `seq,c1_hex,c2_hex,rho_hex,sigma_hex`
    pub fn to_line(&self, params: &GroupParams) -> String {
        let b = &self.ballot;
        format!(
            "{},{},{},{},{}",
            self.seq,
            params.element_hex(&b.ciphertext.c1),
            params.element_hex(&b.ciphertext.c2),
            params.element_hex(b.reference.element()),
            hex::encode(b.signature.to_bytes(params)),
        )
    }
}

/// The server's signed receipt over a ballot's canonical encoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub signature: Signature,
}

impl Acknowledgement {
    pub fn sign(params: &GroupParams, key: &SigningKey, ballot: &Ballot) -> Self {
        Acknowledgement { signature: key.sign(params, &ballot.canonical_bytes(params)) }
    }

    pub fn verify(&self, params: &GroupParams, server_key: &VerifyingKey, ballot: &Ballot) -> bool {
        server_key.verify(params, &ballot.canonical_bytes(params), &self.signature)
    }
}

/// How voter secrets reach the voter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryMode {
    /// `s` and `t` are handed to the voter.
    Direct,
    /// The voter receives a passcode; sealed `s`, `t` live on the voting server.
    Passcode,
}

/// Whether the identity commitment is checked at cast and audit time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protection {
    /// Commitment-augmented credentials: both checks active.
    Augmented,
    /// Plain anonymous credentials: no opening is sent and neither check runs.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevotePolicy {
    /// One entry per voter and per reference.
    Forbidden,
    /// Later entries supersede earlier ones with the same reference.
    LastCounts,
}

macro_rules! kebab_enum_str {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    other => Err(format!("unknown {} {:?}", stringify!($ty), other)),
                }
            }
        }
    };
}

kebab_enum_str!(DeliveryMode { Direct => "direct", Passcode => "passcode" });
kebab_enum_str!(Protection { Augmented => "augmented", Baseline => "baseline" });
kebab_enum_str!(RevotePolicy { Forbidden => "forbidden", LastCounts => "last-counts" });

/// A static second-factor token shared between the voting server and the voter.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecondFactor(String);

impl fmt::Debug for SecondFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecondFactor(..)")
    }
}

impl SecondFactor {
    pub fn new(token: impl Into<String>) -> Self {
        SecondFactor(token.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

/// What a voter presents to log in.
#[derive(Clone, Debug)]
pub struct LoginCredentials {
    pub password: LoginPassword,
    pub second_factor: Option<SecondFactor>,
}
