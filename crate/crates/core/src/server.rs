//! The voting server.
//!
//! A ballot `(c, rho, sigma)` is accepted from an authenticated voter `vid`
//! together with the reference opening `t` only if
//!
//! 1. `rho = Comm(H(vid), t)`,
//! 2. the registry holds a record `(p, rho)` for exactly this `rho`,
//! 3. `sigma` verifies under `p` over `(c, rho)`,
//! 4. the revoting policy permits another entry.
//!
//! `t` lives in the session's transient slot for the duration of the call and
//! is zeroized before the call returns, on every path. With
//! [`Protection::Baseline`] check 1 is skipped and no opening is expected,
//! reproducing plain anonymous credentials.
//!
//! The map from voter to ballot-box position used for audit fetches is never
//! exported; the ballot-box export carries only `(seq, c, rho, sigma)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use zeroize::Zeroize;

use crate::board::RegistryBoard;
use crate::crypto::{
    verify_commitment, GroupParams, LoginPassword, PasswordVerifier, SealedCredentials, SigningKey, VerifyingKey,
};
use crate::protocol::{
    Acknowledgement, Ballot, BallotBoxEntry, DeliveryMode, Protection, ReferenceOpening, RevotePolicy, SecondFactor,
    VoterId,
};
use crate::registrar::ServerProvisioningRecord;

pub type SessionId = u64;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ServerError {
    #[error("operation requires {expected} delivery mode")]
    ModeMismatch { expected: DeliveryMode },
    #[error("voter {0} is already enrolled")]
    AlreadyEnrolled(VoterId),
    #[error("invalid or expired session")]
    InvalidSession,
    #[error("no stored credentials for this voter")]
    NoRecord,
    #[error("no ballot has been cast for this voter")]
    NoBallot,
    #[error("operation unavailable on an honest server")]
    Unavailable,
}

/// Every authentication failure looks the same to the caller.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("authentication failed")]
pub struct AuthError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthFailure {
    UnknownVoter,
    BadPassword,
    BadSecondFactor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionReason {
    /// The augmented server needs `t` and none was sent.
    MissingOpening,
    /// `rho != Comm(H(vid), t)`: the ballot is not linked to the logged-in voter.
    CommitmentMismatch,
    UnknownReference,
    BadSignature,
    RevoteForbidden,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::MissingOpening => "missing-opening",
            RejectionReason::CommitmentMismatch => "commitment-mismatch",
            RejectionReason::UnknownReference => "unknown-reference",
            RejectionReason::BadSignature => "bad-signature",
            RejectionReason::RevoteForbidden => "revote-forbidden",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CastError {
    #[error("request failed")]
    InvalidSession,
    #[error("ballot rejected: {0}")]
    Rejected(RejectionReason),
}

/// Misbehaviour switches for adversarial scenarios. All off by default.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ServerFaults {
    /// Audit fetches for the key voter return the value voter's ballot.
    pub audit_redirect: BTreeMap<VoterId, VoterId>,
    /// Acknowledgements are signed over the wrong bytes.
    pub tamper_acks: bool,
    /// The operator colludes with an attacker: sessions can be forged.
    pub colluding: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServerConfig {
    pub mode: DeliveryMode,
    pub two_factor: bool,
    pub revote: RevotePolicy,
    pub protection: Protection,
    pub faults: ServerFaults,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            mode: DeliveryMode::Direct,
            two_factor: false,
            revote: RevotePolicy::Forbidden,
            protection: Protection::Augmented,
            faults: ServerFaults::default(),
        }
    }
}

/// Login material handed out at enrollment.
#[derive(Clone, Debug)]
pub struct Enrollment {
    /// Server-issued password (direct mode only; in passcode mode it is derived from the passcode).
    pub login_password: Option<LoginPassword>,
    pub second_factor: Option<SecondFactor>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuthRecord {
    pub verifier: PasswordVerifier,
    pub second_factor: Option<SecondFactor>,
}

#[derive(Debug, Serialize)]
struct Session {
    vid: VoterId,
    created_at: u64,
    transient_opening: Option<ReferenceOpening>,
}

#[derive(Clone, Debug)]
pub struct CastReceipt {
    pub entry: BallotBoxEntry,
    pub ack: Acknowledgement,
}

/// What an attacker obtains by copying the server's storage.
#[derive(Clone, Debug)]
pub struct StolenDatabase {
    pub auth: BTreeMap<VoterId, AuthRecord>,
    pub sealed: BTreeMap<VoterId, SealedCredentials>,
}

#[derive(Debug, Serialize)]
pub struct VotingServer {
    #[serde(skip)]
    params: GroupParams,
    config: ServerConfig,
    ack_key: SigningKey,
    ack_public: VerifyingKey,
    registry: BTreeMap<String, VerifyingKey>,
    auth: BTreeMap<VoterId, AuthRecord>,
    sealed: BTreeMap<VoterId, SealedCredentials>,
    sessions: BTreeMap<SessionId, Session>,
    next_session: SessionId,
    clock: u64,
    ballot_box: Vec<BallotBoxEntry>,
    acks: Vec<Acknowledgement>,
    box_references: BTreeSet<String>,
    has_voted: BTreeSet<VoterId>,
    logins: BTreeMap<VoterId, u64>,
    failed_attempts: BTreeMap<AuthFailure, u64>,
    /// Volatile: voter -> sequence number of the ballot they cast.
    audit_index: BTreeMap<VoterId, u64>,
    log: Vec<String>,
    #[serde(skip)]
    rng: ChaCha20Rng,
}

impl VotingServer {
    pub fn new(params: GroupParams, config: ServerConfig, registry: &RegistryBoard, mut rng: ChaCha20Rng) -> Self {
        let ack_key = SigningKey::generate(&params, &mut rng);
        let ack_public = ack_key.verifying_key(&params);
        let registry = registry
            .records()
            .iter()
            .map(|r| (params.element_hex(r.reference.element()), r.verifying_key.clone()))
            .collect::<BTreeMap<_, _>>();
        let log = vec![format!(
            "server started: mode={} 2fa={} revote={} protection={} registry={}",
            config.mode,
            config.two_factor,
            config.revote,
            config.protection,
            registry.len()
        )];
        VotingServer {
            params,
            config,
            ack_key,
            ack_public,
            registry,
            auth: BTreeMap::new(),
            sealed: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_session: 1,
            clock: 0,
            ballot_box: Vec::new(),
            acks: Vec::new(),
            box_references: BTreeSet::new(),
            has_voted: BTreeSet::new(),
            logins: BTreeMap::new(),
            failed_attempts: BTreeMap::new(),
            audit_index: BTreeMap::new(),
            log,
            rng,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// The published acknowledgement key.
    pub fn ack_public_key(&self) -> &VerifyingKey {
        &self.ack_public
    }

    pub fn entries(&self) -> &[BallotBoxEntry] {
        &self.ballot_box
    }

    pub fn has_voted(&self, vid: &VoterId) -> bool {
        self.has_voted.contains(vid)
    }

    /// Successful logins of `vid`.
    pub fn login_count(&self, vid: &VoterId) -> u64 {
        self.logins.get(vid).copied().unwrap_or(0)
    }

    pub fn failed_attempts(&self) -> u64 {
        self.failed_attempts.values().sum()
    }

    pub fn failed_attempts_by_reason(&self) -> &BTreeMap<AuthFailure, u64> {
        &self.failed_attempts
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    /// True while some session still holds a reference opening.
    pub fn holds_transient_openings(&self) -> bool {
        self.sessions.values().any(|s| s.transient_opening.is_some())
    }

    /// Full serialization of the server's memory, volatile parts included.
    pub fn state_dump(&self) -> String {
        serde_json::to_string(self).expect("server state serializes")
    }

    pub fn enroll_direct(&mut self, vid: &VoterId) -> Result<Enrollment, ServerError> {
        if self.config.mode != DeliveryMode::Direct {
            return Err(ServerError::ModeMismatch { expected: DeliveryMode::Direct });
        }
        if self.auth.contains_key(vid) {
            return Err(ServerError::AlreadyEnrolled(vid.clone()));
        }
        let password = LoginPassword::generate(&mut self.rng);
        let verifier = PasswordVerifier::new(&password, &mut self.rng);
        let second_factor = self.issue_second_factor();
        self.auth.insert(vid.clone(), AuthRecord { verifier, second_factor: second_factor.clone() });
        Ok(Enrollment { login_password: Some(password), second_factor })
    }

    pub fn enroll_passcode(&mut self, record: ServerProvisioningRecord) -> Result<Enrollment, ServerError> {
        if self.config.mode != DeliveryMode::Passcode {
            return Err(ServerError::ModeMismatch { expected: DeliveryMode::Passcode });
        }
        if self.auth.contains_key(&record.vid) {
            return Err(ServerError::AlreadyEnrolled(record.vid));
        }
        let second_factor = self.issue_second_factor();
        self.auth.insert(
            record.vid.clone(),
            AuthRecord { verifier: record.password_verifier, second_factor: second_factor.clone() },
        );
        self.sealed.insert(record.vid, record.sealed);
        Ok(Enrollment { login_password: None, second_factor })
    }

    fn issue_second_factor(&mut self) -> Option<SecondFactor> {
        self.config.two_factor.then(|| {
            let mut token = [0u8; 4];
            self.rng.fill_bytes(&mut token);
            SecondFactor::new(hex::encode(token))
        })
    }

    pub fn authenticate(
        &mut self,
        vid: &VoterId,
        password: &str,
        second_factor: Option<&str>,
    ) -> Result<SessionId, AuthError> {
        let failure = match self.auth.get(vid) {
            None => Some(AuthFailure::UnknownVoter),
            Some(rec) if !rec.verifier.verify(password) => Some(AuthFailure::BadPassword),
            Some(rec) => match (&rec.second_factor, second_factor) {
                (None, _) => None,
                (Some(expected), Some(given)) if expected.expose() == given => None,
                (Some(_), _) => Some(AuthFailure::BadSecondFactor),
            },
        };
        if let Some(reason) = failure {
            *self.failed_attempts.entry(reason).or_default() += 1;
            self.log.push(format!("authentication failed: {reason:?}"));
            return Err(AuthError);
        }
        Ok(self.open_session(vid))
    }

    fn open_session(&mut self, vid: &VoterId) -> SessionId {
        self.clock += 1;
        let id = self.next_session;
        self.next_session += 1;
        self.sessions.insert(id, Session { vid: vid.clone(), created_at: self.clock, transient_opening: None });
        *self.logins.entry(vid.clone()).or_default() += 1;
        id
    }

    /// Colluding operator: a session for any voter without credentials.
    pub fn forge_session(&mut self, vid: &VoterId) -> Result<SessionId, ServerError> {
        if !self.config.faults.colluding {
            return Err(ServerError::Unavailable);
        }
        self.log.push("session forged by operator".into());
        Ok(self.open_session(vid))
    }

    /// A copy of everything the server persists about voters.
    pub fn steal_database(&self) -> StolenDatabase {
        StolenDatabase { auth: self.auth.clone(), sealed: self.sealed.clone() }
    }

    pub fn session_voter(&self, session: SessionId) -> Option<&VoterId> {
        self.sessions.get(&session).map(|s| &s.vid)
    }

    pub fn validate_and_cast(
        &mut self,
        session: SessionId,
        ballot: Ballot,
        opening: Option<ReferenceOpening>,
    ) -> Result<CastReceipt, CastError> {
        let Some(slot) = self.sessions.get_mut(&session) else {
            if let Some(mut t) = opening {
                t.zeroize();
            }
            return Err(CastError::InvalidSession);
        };
        let vid = slot.vid.clone();
        slot.transient_opening = opening;

        let outcome = self.check_ballot(session, &vid, &ballot);

        let slot = self.sessions.get_mut(&session).expect("session exists for the whole call");
        if let Some(mut t) = slot.transient_opening.take() {
            t.zeroize();
        }
        debug_assert!(!self.holds_transient_openings());

        match outcome {
            Ok(()) => Ok(self.accept(&vid, ballot)),
            Err(reason) => {
                self.log.push(format!("cast rejected: {reason}"));
                Err(CastError::Rejected(reason))
            }
        }
    }

    fn check_ballot(&self, session: SessionId, vid: &VoterId, ballot: &Ballot) -> Result<(), RejectionReason> {
        let params = &self.params;
        if self.config.protection == Protection::Augmented {
            let t = self.sessions[&session].transient_opening.as_ref().ok_or(RejectionReason::MissingOpening)?;
            if !verify_commitment(params, &ballot.reference, &params.identity_scalar(vid.as_str()), t.scalar()) {
                return Err(RejectionReason::CommitmentMismatch);
            }
        }
        let rho = params.element_hex(ballot.reference.element());
        let key = self.registry.get(&rho).ok_or(RejectionReason::UnknownReference)?;
        if !ballot.signature_valid(params, key) {
            return Err(RejectionReason::BadSignature);
        }
        if self.config.revote == RevotePolicy::Forbidden
            && (self.has_voted.contains(vid) || self.box_references.contains(&rho))
        {
            return Err(RejectionReason::RevoteForbidden);
        }
        Ok(())
    }

    fn accept(&mut self, vid: &VoterId, ballot: Ballot) -> CastReceipt {
        self.clock += 1;
        let seq = self.ballot_box.len() as u64 + 1;
        let mut ack = Acknowledgement::sign(&self.params, &self.ack_key, &ballot);
        if self.config.faults.tamper_acks {
            let mut wrong = ballot.canonical_bytes(&self.params);
            wrong.push(0);
            ack = Acknowledgement { signature: self.ack_key.sign(&self.params, &wrong) };
        }
        self.box_references.insert(self.params.element_hex(ballot.reference.element()));
        let entry = BallotBoxEntry { seq, ballot, accepted_at: self.clock };
        self.ballot_box.push(entry.clone());
        self.acks.push(ack.clone());
        self.has_voted.insert(vid.clone());
        self.audit_index.insert(vid.clone(), seq);
        self.log.push(format!("cast accepted: seq={seq}"));
        CastReceipt { entry, ack }
    }

    /// The ballot this voter cast, with its acknowledgement.
    pub fn fetch_ballot_for_audit(&self, session: SessionId) -> Result<(BallotBoxEntry, Acknowledgement), ServerError> {
        let vid = self.session_voter(session).ok_or(ServerError::InvalidSession)?;
        let target = self.config.faults.audit_redirect.get(vid).unwrap_or(vid);
        let seq = *self.audit_index.get(target).ok_or(ServerError::NoBallot)?;
        let idx = (seq - 1) as usize;
        Ok((self.ballot_box[idx].clone(), self.acks[idx].clone()))
    }

    /// Passcode mode: the sealed `(s, t)` blobs of the logged-in voter.
    pub fn retrieve_sealed_credentials(&self, session: SessionId) -> Result<SealedCredentials, ServerError> {
        if self.config.mode != DeliveryMode::Passcode {
            return Err(ServerError::ModeMismatch { expected: DeliveryMode::Passcode });
        }
        let vid = self.session_voter(session).ok_or(ServerError::InvalidSession)?;
        self.sealed.get(vid).cloned().ok_or(ServerError::NoRecord)
    }

    /// `seq,c1_hex,c2_hex,rho_hex,sigma_hex` per line.
    pub fn export_ballot_box(&self) -> String {
        self.ballot_box.iter().map(|e| e.to_line(&self.params) + "\n").collect()
    }
}

/// Shared handle: casts and logins take the write lock one at a time,
/// exports and audit fetches read a consistent snapshot.
#[derive(Clone, Debug)]
pub struct SharedServer(Arc<RwLock<VotingServer>>);

impl SharedServer {
    pub fn new(server: VotingServer) -> Self {
        SharedServer(Arc::new(RwLock::new(server)))
    }

    pub fn authenticate(
        &self,
        vid: &VoterId,
        password: &str,
        second_factor: Option<&str>,
    ) -> Result<SessionId, AuthError> {
        self.0.write().expect("server lock").authenticate(vid, password, second_factor)
    }

    pub fn validate_and_cast(
        &self,
        session: SessionId,
        ballot: Ballot,
        opening: Option<ReferenceOpening>,
    ) -> Result<CastReceipt, CastError> {
        self.0.write().expect("server lock").validate_and_cast(session, ballot, opening)
    }

    pub fn fetch_ballot_for_audit(&self, session: SessionId) -> Result<(BallotBoxEntry, Acknowledgement), ServerError> {
        self.0.read().expect("server lock").fetch_ballot_for_audit(session)
    }

    pub fn export_ballot_box(&self) -> String {
        self.0.read().expect("server lock").export_ballot_box()
    }

    pub fn with<R>(&self, f: impl FnOnce(&VotingServer) -> R) -> R {
        f(&self.0.read().expect("server lock"))
    }

    pub fn with_mut<R>(&self, f: impl FnOnce(&mut VotingServer) -> R) -> R {
        f(&mut self.0.write().expect("server lock"))
    }
}
