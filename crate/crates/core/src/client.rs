//! The voter's primary device.
//!
//! Casting encrypts the choice, signs `(c, rho)` with `s`, logs in and sends
//! the ballot together with `t`. Before anything leaves the device the client
//! checks that its own `(p, rho)` appears in the published registry; a
//! mismatch blocks the cast. After a cast `s` and `t` are erased and only the
//! audit payload `(t, r, fingerprint)` remains for transfer to the second device.

use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use zeroize::Zeroize;

use crate::board::RegistryBoard;
use crate::crypto::{
    commit_identity, derive_from_passcode, encrypt, unseal, Codebook, ElGamalError, Element, GroupError, GroupParams,
    Passcode, Scalar, SealError, VerifyingKey,
};
use crate::protocol::{
    Acknowledgement, AnonymizedReference, Ballot, DeliveryMode, LoginCredentials, Protection, ReferenceOpening,
    SecondFactor, VoterId, VoterSecrets,
};
use crate::registrar::CredentialPackage;
use crate::server::{AuthError, CastError, Enrollment, ServerError, SessionId, VotingServer};

/// Public election data every device needs.
#[derive(Clone, Debug)]
pub struct ElectionInfo {
    pub params: GroupParams,
    pub election_key: Element,
    pub codebook: Codebook,
    pub server_key: VerifyingKey,
    pub registry: RegistryBoard,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("no voting credentials loaded")]
    NoCredentials,
    #[error("no login credentials set")]
    NoLogin,
    #[error("package is addressed to {got}, not {expected}")]
    WrongRecipient { expected: VoterId, got: VoterId },
    #[error("package does not match the {0} delivery mode")]
    WrongPackage(DeliveryMode),
    #[error("own credentials are not in the published registry")]
    RegistryMismatch,
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Cast(#[from] CastError),
    #[error(transparent)]
    Seal(#[from] SealError),
    #[error(transparent)]
    ElGamal(#[from] ElGamalError),
    #[error("malformed audit payload: {0}")]
    MalformedPayload(String),
}

/// What the primary device hands to the second device:
/// `v1:<t_hex>:<r_hex>:<fingerprint_hex>`.
#[derive(Clone, PartialEq, Eq)]
pub struct AuditPayload {
    pub opening: ReferenceOpening,
    pub randomness: Scalar,
    pub fingerprint: [u8; 32],
}

impl std::fmt::Debug for AuditPayload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditPayload").field("fingerprint", &hex::encode(self.fingerprint)).finish_non_exhaustive()
    }
}

impl AuditPayload {
    pub fn to_line(&self, params: &GroupParams) -> String {
        format!(
            "v1:{}:{}:{}",
            params.scalar_hex(self.opening.scalar()),
            params.scalar_hex(&self.randomness),
            hex::encode(self.fingerprint)
        )
    }

    pub fn parse(params: &GroupParams, line: &str) -> Result<Self, ClientError> {
        let bad = |e: GroupError| ClientError::MalformedPayload(e.to_string());
        let parts: Vec<&str> = line.trim().split(':').collect();
        let [version, t, r, fp] = parts[..] else {
            return Err(ClientError::MalformedPayload(format!("expected 4 fields, got {}", parts.len())));
        };
        if version != "v1" {
            return Err(ClientError::MalformedPayload(format!("unsupported version {version:?}")));
        }
        let fingerprint = hex::decode(fp)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .ok_or_else(|| ClientError::MalformedPayload("fingerprint must be 64 hex digits".into()))?;
        Ok(AuditPayload {
            opening: ReferenceOpening::new(params.scalar_from_hex(t).map_err(bad)?),
            randomness: params.scalar_from_hex(r).map_err(bad)?,
            fingerprint,
        })
    }
}

impl Zeroize for AuditPayload {
    fn zeroize(&mut self) {
        self.opening.zeroize();
        self.randomness.zeroize();
        self.fingerprint.zeroize();
    }
}

/// The reference this voter signs under, checked against the registry.
///
/// Augmented: `rho = Comm(H(vid), t)` and `(p, rho)` must be published.
/// Baseline: `rho` is whatever the registry lists next to `p`.
pub fn own_reference(
    info: &ElectionInfo,
    vid: &VoterId,
    secrets: &VoterSecrets,
    protection: Protection,
) -> Result<AnonymizedReference, ClientError> {
    let params = &info.params;
    let p = secrets.signing_key.verifying_key(params);
    match protection {
        Protection::Augmented => {
            let rho = commit_identity(params, vid.as_str(), secrets.opening.scalar());
            info.registry
                .records()
                .iter()
                .any(|r| r.verifying_key == p && r.reference == rho)
                .then_some(rho)
                .ok_or(ClientError::RegistryMismatch)
        }
        Protection::Baseline => info
            .registry
            .records()
            .iter()
            .find(|r| r.verifying_key == p)
            .map(|r| r.reference.clone())
            .ok_or(ClientError::RegistryMismatch),
    }
}

/// Builds `(c, rho, sigma)` for `choice` and returns it with the encryption randomness.
pub fn create_ballot(
    info: &ElectionInfo,
    vid: &VoterId,
    secrets: &VoterSecrets,
    protection: Protection,
    choice: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(Ballot, Scalar), ClientError> {
    let params = &info.params;
    let reference = own_reference(info, vid, secrets, protection)?;
    let m = info.codebook.encode(choice)?;
    let r = params.random_scalar(rng);
    let ciphertext = encrypt(params, &info.election_key, m, &r);
    let signature = secrets.signing_key.sign(params, &Ballot::signing_message(params, &ciphertext, &reference));
    Ok((Ballot { ciphertext, reference, signature }, r))
}

#[derive(Clone, Debug)]
pub struct CastResult {
    pub seq: u64,
    pub ballot: Ballot,
    pub ack: Acknowledgement,
    pub ack_valid: bool,
    pub payload: AuditPayload,
}

#[derive(Debug, Serialize)]
pub struct VoterClient {
    vid: VoterId,
    protection: Protection,
    /// Keep `s` and `t` after a direct-mode cast so the voter can cast again.
    keep_after_cast: bool,
    secrets: Option<VoterSecrets>,
    passcode: Option<Passcode>,
    password: Option<crate::crypto::LoginPassword>,
    second_factor: Option<SecondFactor>,
    log: Vec<String>,
    #[serde(skip)]
    info: Arc<ElectionInfo>,
    #[serde(skip)]
    rng: ChaCha20Rng,
}

impl VoterClient {
    pub fn new(vid: VoterId, info: Arc<ElectionInfo>, protection: Protection, rng: ChaCha20Rng) -> Self {
        VoterClient {
            vid,
            protection,
            keep_after_cast: false,
            secrets: None,
            passcode: None,
            password: None,
            second_factor: None,
            log: Vec::new(),
            info,
            rng,
        }
    }

    pub fn vid(&self) -> &VoterId {
        &self.vid
    }

    pub fn info(&self) -> &ElectionInfo {
        &self.info
    }

    pub fn set_keep_after_cast(&mut self, keep: bool) {
        self.keep_after_cast = keep;
    }

    pub fn holds_secrets(&self) -> bool {
        self.secrets.is_some()
    }

    pub fn load_package(&mut self, package: CredentialPackage) -> Result<(), ClientError> {
        if package.vid() != &self.vid {
            return Err(ClientError::WrongRecipient { expected: self.vid.clone(), got: package.vid().clone() });
        }
        match package {
            CredentialPackage::Direct { secrets, .. } => self.secrets = Some(secrets),
            CredentialPackage::Passcode { passcode, .. } => self.passcode = Some(passcode),
        }
        Ok(())
    }

    pub fn set_enrollment(&mut self, enrollment: Enrollment) {
        if let Some(pw) = enrollment.login_password {
            self.password = Some(pw);
        }
        self.second_factor = enrollment.second_factor;
    }

    /// The credentials the voter types in to log in, on either device.
    pub fn login_credentials(&self) -> Option<LoginCredentials> {
        let password = match (&self.passcode, &self.password) {
            (Some(tau), _) => derive_from_passcode(tau).login_password,
            (None, Some(pw)) => pw.clone(),
            (None, None) => return None,
        };
        Some(LoginCredentials { password, second_factor: self.second_factor.clone() })
    }

    fn login(&self, server: &mut VotingServer) -> Result<SessionId, ClientError> {
        let creds = self.login_credentials().ok_or(ClientError::NoLogin)?;
        Ok(server.authenticate(&self.vid, creds.password.expose(), creds.second_factor.as_ref().map(|f| f.expose()))?)
    }

    /// Casts `choice`. Direct mode uses the loaded `(s, t)`; passcode mode
    /// fetches and unseals them for the duration of the call.
    pub fn cast(&mut self, server: &mut VotingServer, choice: usize) -> Result<CastResult, ClientError> {
        let (mut secrets, from_passcode) = match (&self.secrets, &self.passcode) {
            (Some(s), _) => (s.clone(), false),
            (None, Some(_)) => (self.unseal_from_server(server)?, true),
            (None, None) => return Err(ClientError::NoCredentials),
        };
        let result = self.cast_with(server, &secrets, choice);
        secrets.zeroize();
        if !from_passcode && result.is_ok() && !self.keep_after_cast {
            if let Some(mut s) = self.secrets.take() {
                s.zeroize();
            }
        }
        match &result {
            Ok(r) => self.log.push(format!("cast accepted: seq={} ack_valid={}", r.seq, r.ack_valid)),
            Err(e) => self.log.push(format!("cast failed: {e}")),
        }
        result
    }

    fn unseal_from_server(&self, server: &mut VotingServer) -> Result<VoterSecrets, ClientError> {
        let tau = self.passcode.as_ref().ok_or(ClientError::NoCredentials)?;
        let mut derived = derive_from_passcode(tau);
        let session = server.authenticate(
            &self.vid,
            derived.login_password.expose(),
            self.second_factor.as_ref().map(|f| f.expose()),
        );
        let unsealed = session
            .map_err(ClientError::from)
            .and_then(|s| Ok(server.retrieve_sealed_credentials(s)?))
            .and_then(|sealed| Ok(unseal(&self.info.params, &derived.seal_key, &sealed)?));
        derived.zeroize();
        let (signing_key, t) = unsealed?;
        Ok(VoterSecrets { signing_key, opening: ReferenceOpening::new(t) })
    }

    fn cast_with(
        &mut self,
        server: &mut VotingServer,
        secrets: &VoterSecrets,
        choice: usize,
    ) -> Result<CastResult, ClientError> {
        let info = Arc::clone(&self.info);
        let params = &info.params;
        let (ballot, r) = create_ballot(&info, &self.vid, secrets, self.protection, choice, &mut self.rng)?;
        let session = self.login(server)?;
        let opening = (self.protection == Protection::Augmented).then(|| secrets.opening.clone());
        let receipt = server.validate_and_cast(session, ballot.clone(), opening)?;
        let ack_valid = receipt.ack.verify(params, &info.server_key, &ballot);
        let payload =
            AuditPayload { opening: secrets.opening.clone(), randomness: r, fingerprint: ballot.fingerprint(params) };
        Ok(CastResult { seq: receipt.entry.seq, ballot, ack: receipt.ack, ack_valid, payload })
    }

    /// Serialization of everything the client holds, for erasure checks.
    pub fn state_dump(&self) -> String {
        serde_json::to_string(self).expect("client state serializes")
    }
}
