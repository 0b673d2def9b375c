//! Cryptographic primitives: group arithmetic, Pedersen commitments,
//! ElGamal, Schnorr signatures, passcode key derivation and credential sealing.

pub mod commitment;
pub mod elgamal;
pub mod group;
pub mod kdf;
pub mod seal;
pub mod signature;

pub use commitment::{commit, commit_identity, equivocate, verify_commitment, Commitment, CommitmentError};
pub use elgamal::{decrypt, encrypt, Ciphertext, Codebook, ElGamalError, ElGamalKeypair};
pub use group::{Element, GroupError, GroupParams, HashDomain, Profile, Scalar};
pub use kdf::{derive_from_passcode, DerivedSecrets, LoginPassword, Passcode, PasswordVerifier, SealKey};
pub use seal::{seal, unseal, SealError, SealedCredentials};
pub use signature::{Signature, SigningKey, VerifyingKey};
