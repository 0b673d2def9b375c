//! The voter's second device.
//!
//! It receives the audit payload `(t, r, fingerprint)` from the primary device,
//! logs in on its own and fetches "its" ballot from the server. It then checks
//!
//! * clash: `rho = Comm(H(vid), t)`, so the ballot is bound to this voter,
//! * plaintext: `c = Enc(pk, m_i; r)` for exactly one codebook entry `i`,
//! * acknowledgement: the server's signature over the canonical encoding,
//! * fingerprint: the fetched ballot hashes to the fingerprint from the payload.
//!
//! Under [`Protection::Baseline`] the clash check is reported as skipped.

use std::fmt;

use serde::Serialize;
use zeroize::Zeroize;

use crate::client::{AuditPayload, ClientError, ElectionInfo};
use crate::crypto::{encrypt, verify_commitment};
use crate::protocol::{Acknowledgement, Ballot, BallotBoxEntry, LoginCredentials, Protection, VoterId};
use crate::server::{AuthError, ServerError, VotingServer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    Skipped,
}

impl CheckOutcome {
    fn from_bool(ok: bool) -> Self {
        if ok {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CheckOutcome::Pass => "pass",
            CheckOutcome::Fail => "fail",
            CheckOutcome::Skipped => "skipped",
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AuditError {
    #[error(transparent)]
    Payload(#[from] ClientError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Server(#[from] ServerError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub vid: VoterId,
    pub seq: u64,
    pub clash: CheckOutcome,
    pub plaintext: CheckOutcome,
    /// Codebook index the ciphertext opens to, when the plaintext check passes.
    pub choice: Option<usize>,
    pub ack: CheckOutcome,
    pub fingerprint: CheckOutcome,
}

impl AuditReport {
    /// True iff no check failed.
    pub fn verdict(&self) -> bool {
        [self.clash, self.plaintext, self.ack, self.fingerprint].iter().all(|c| *c != CheckOutcome::Fail)
    }

    /// `key=value` lines ending in `verdict=pass|fail`.
    pub fn render(&self) -> String {
        let choice = self.choice.map_or_else(|| "none".to_string(), |c| c.to_string());
        format!(
            "vid={}\nseq={}\nclash={}\nplaintext={}\nchoice={}\nack={}\nfingerprint={}\nverdict={}\n",
            self.vid,
            self.seq,
            self.clash,
            self.plaintext,
            choice,
            self.ack,
            self.fingerprint,
            if self.verdict() { "pass" } else { "fail" }
        )
    }
}

/// Acknowledgement check usable without a server connection.
pub fn verify_receipt(info: &ElectionInfo, ballot: &Ballot, ack: &Acknowledgement) -> bool {
    ack.verify(&info.params, &info.server_key, ballot)
}

#[derive(Debug, Serialize)]
pub struct SecondDevice {
    vid: VoterId,
    protection: Protection,
    reports: Vec<AuditReport>,
}

impl SecondDevice {
    pub fn new(vid: VoterId, protection: Protection) -> Self {
        SecondDevice { vid, protection, reports: Vec::new() }
    }

    pub fn reports(&self) -> &[AuditReport] {
        &self.reports
    }

    /// Runs every check against the ballot the server returns for this voter.
    pub fn audit(
        &mut self,
        info: &ElectionInfo,
        payload_line: &str,
        login: &LoginCredentials,
        server: &mut VotingServer,
    ) -> Result<AuditReport, AuditError> {
        let mut payload = AuditPayload::parse(&info.params, payload_line)?;
        let session = server.authenticate(
            &self.vid,
            login.password.expose(),
            login.second_factor.as_ref().map(|f| f.expose()),
        )?;
        let fetched = server.fetch_ballot_for_audit(session);
        let report = fetched.map(|(entry, ack)| self.check(info, &payload, &entry, &ack));
        payload.zeroize();
        let report = report?;
        self.reports.push(report.clone());
        Ok(report)
    }

    /// The checks on already fetched data.
    pub fn check(
        &self,
        info: &ElectionInfo,
        payload: &AuditPayload,
        entry: &BallotBoxEntry,
        ack: &Acknowledgement,
    ) -> AuditReport {
        let params = &info.params;
        let ballot = &entry.ballot;
        let clash = match self.protection {
            Protection::Augmented => CheckOutcome::from_bool(verify_commitment(
                params,
                &ballot.reference,
                &params.identity_scalar(self.vid.as_str()),
                payload.opening.scalar(),
            )),
            Protection::Baseline => CheckOutcome::Skipped,
        };
        let matches: Vec<usize> = info
            .codebook
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, m)| encrypt(params, &info.election_key, m, &payload.randomness) == ballot.ciphertext)
            .map(|(i, _)| i)
            .collect();
        let choice = (matches.len() == 1).then(|| matches[0]);
        AuditReport {
            vid: self.vid.clone(),
            seq: entry.seq,
            clash,
            plaintext: CheckOutcome::from_bool(choice.is_some()),
            choice,
            ack: CheckOutcome::from_bool(verify_receipt(info, ballot, ack)),
            fingerprint: CheckOutcome::from_bool(ballot.fingerprint(params) == payload.fingerprint),
        }
    }

    pub fn state_dump(&self) -> String {
        serde_json::to_string(self).expect("device state serializes")
    }
}
