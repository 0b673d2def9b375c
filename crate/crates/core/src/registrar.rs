//! The registrar: credential generation, registry publication and secret delivery.
//!
//! For every voter the registrar samples a signing key `s` (public key `p`) and
//! a reference opening `t`, and computes the anonymized reference
//! `rho = Comm(H(vid), t)`. Records `(p, rho)` are published without identities.
//! Secrets reach the voter over a [`DeliveryChannel`], either directly or, in
//! passcode mode, as a passcode whose derived key seals `s` and `t` for the
//! voting server. Secrets are erased on delivery unless a retention window is
//! configured.
//!
//! Two guards keep the toy group meaningful: registration rejects an
//! identifier whose identity scalar collides with an already registered one
//! (the commitment could not tell them apart), and `t` is resampled until
//! `rho` is unique in the registry.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use crate::board::RegistryBoard;
use crate::crypto::{
    commit_identity, derive_from_passcode, seal, Commitment, GroupParams, Passcode, PasswordVerifier, Scalar,
    SealedCredentials, SigningKey,
};
use crate::protocol::{DeliveryMode, ReferenceOpening, RegistryRecord, VoterId, VoterSecrets};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RegistrarError {
    #[error("voter {0} is already registered")]
    DuplicateVoter(VoterId),
    #[error("voter {0} is not registered")]
    UnknownVoter(VoterId),
    #[error("identity scalar of {new} collides with {existing}")]
    IdentityCollision { new: VoterId, existing: VoterId },
    #[error("no unused reference left in the group")]
    ReferenceSpaceExhausted,
    #[error("no unused verification key left in the group")]
    KeySpaceExhausted,
    #[error("verification key is already assigned to another voter")]
    KeyTaken,
    #[error("reference is already assigned to another voter")]
    ReferenceTaken,
    #[error("operation requires phase {expected:?}, registrar is {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("secrets for {0} were erased")]
    SecretsErased(VoterId),
    #[error("operation requires {expected} delivery mode")]
    ModeMismatch { expected: DeliveryMode },
    #[error("operation is only available to an adversarial registrar")]
    OperationUnavailable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Open,
    Closed,
    Published,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetentionPolicy {
    EraseOnDelivery,
    /// Keep secrets after delivery so they can be re-delivered, until
    /// [`Registrar::purge_retained`] is called.
    RetainForRedelivery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Byte order of the `rho` encoding.
    Sorted,
    /// Canonical order, then a Fisher-Yates shuffle under the seed.
    Shuffled { seed: u64 },
}

impl OrderPolicy {
    pub fn label(&self) -> String {
        match self {
            OrderPolicy::Sorted => "sorted".to_string(),
            OrderPolicy::Shuffled { seed } => format!("shuffled:{seed}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrarConfig {
    pub mode: DeliveryMode,
    pub retention: RetentionPolicy,
    /// Enables [`Registrar::misbehave_duplicate_credentials`].
    pub adversarial: bool,
}

impl Default for RegistrarConfig {
    fn default() -> Self {
        RegistrarConfig { mode: DeliveryMode::Direct, retention: RetentionPolicy::EraseOnDelivery, adversarial: false }
    }
}

/// What the voter receives over the confidential channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CredentialPackage {
    Direct { vid: VoterId, secrets: VoterSecrets },
    Passcode { vid: VoterId, passcode: Passcode },
}

impl CredentialPackage {
    pub fn vid(&self) -> &VoterId {
        match self {
            CredentialPackage::Direct { vid, .. } | CredentialPackage::Passcode { vid, .. } => vid,
        }
    }
}

/// What the voting server receives for a voter in passcode mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerProvisioningRecord {
    pub vid: VoterId,
    pub password_verifier: PasswordVerifier,
    pub sealed: SealedCredentials,
}

/// In-process confidential channel with an optional wiretap.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct DeliveryChannel {
    tap: Option<Vec<CredentialPackage>>,
    delivered: u64,
}

impl DeliveryChannel {
    pub fn enable_tap(&mut self) {
        self.tap.get_or_insert_with(Vec::new);
    }

    pub fn is_tapped(&self) -> bool {
        self.tap.is_some()
    }

    pub fn tapped(&self) -> &[CredentialPackage] {
        self.tap.as_deref().unwrap_or(&[])
    }

    fn send(&mut self, package: CredentialPackage) -> CredentialPackage {
        self.delivered += 1;
        if let Some(tap) = self.tap.as_mut() {
            tap.push(package.clone());
        }
        package
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VoterRecord {
    record: RegistryRecord,
    /// Set for a voter whose credentials were cloned from another voter.
    cloned_from: Option<VoterId>,
}

#[derive(Debug, Serialize)]
pub struct Registrar {
    #[serde(skip)]
    params: GroupParams,
    config: RegistrarConfig,
    phase: Phase,
    voters: BTreeMap<VoterId, VoterRecord>,
    identity_index: BTreeMap<String, VoterId>,
    references: BTreeSet<String>,
    verifying_keys: BTreeSet<String>,
    secrets: BTreeMap<VoterId, VoterSecrets>,
    delivered: BTreeSet<VoterId>,
    channel: DeliveryChannel,
    log: Vec<String>,
    #[serde(skip)]
    rng: ChaCha20Rng,
}

impl Registrar {
    pub fn new(params: GroupParams, config: RegistrarConfig, rng: ChaCha20Rng) -> Self {
        let log = vec![
            format!(
                "registrar started: mode={} retention={:?} adversarial={}",
                config.mode, config.retention, config.adversarial
            ),
            "trust assumption: the delivery channel is confidential and reaches the intended voter".to_string(),
        ];
        Registrar {
            params,
            config,
            phase: Phase::Open,
            voters: BTreeMap::new(),
            identity_index: BTreeMap::new(),
            references: BTreeSet::new(),
            verifying_keys: BTreeSet::new(),
            secrets: BTreeMap::new(),
            delivered: BTreeSet::new(),
            channel: DeliveryChannel::default(),
            log,
            rng,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &RegistrarConfig {
        &self.config
    }

    pub fn channel_mut(&mut self) -> &mut DeliveryChannel {
        &mut self.channel
    }

    pub fn channel(&self) -> &DeliveryChannel {
        &self.channel
    }

    pub fn audit_log(&self) -> &[String] {
        &self.log
    }

    pub fn is_registered(&self, vid: &VoterId) -> bool {
        self.voters.contains_key(vid)
    }

    pub fn holds_secrets_for(&self, vid: &VoterId) -> bool {
        self.secrets.contains_key(vid)
    }

    pub fn record_for(&self, vid: &VoterId) -> Option<&RegistryRecord> {
        self.voters.get(vid).map(|v| &v.record)
    }

    /// Full serialization of the registrar's state, for erasure checks.
    pub fn state_dump(&self) -> String {
        serde_json::to_string(self).expect("registrar state serializes")
    }

    /// Samples `(s, t)`, records `(p, rho)` and keeps the secrets until delivery.
    pub fn generate_credentials(&mut self, vid: &VoterId) -> Result<RegistryRecord, RegistrarError> {
        let id_key = self.admit(vid)?;
        let signing_key = self.fresh_signing_key()?;
        let (opening, reference) = self.fresh_reference(vid)?;
        Ok(self.record(vid, id_key, signing_key, opening, reference))
    }

    /// Registers `vid` with externally chosen secrets.
    pub fn import_credentials(
        &mut self,
        vid: &VoterId,
        secrets: VoterSecrets,
    ) -> Result<RegistryRecord, RegistrarError> {
        let id_key = self.admit(vid)?;
        let reference = commit_identity(&self.params, vid.as_str(), secrets.opening.scalar());
        let rho_key = self.params.element_hex(reference.element());
        let p_key = self.params.element_hex(secrets.signing_key.verifying_key(&self.params).element());
        if self.references.contains(&rho_key) {
            return Err(RegistrarError::ReferenceTaken);
        }
        if !self.verifying_keys.insert(p_key) {
            return Err(RegistrarError::KeyTaken);
        }
        self.references.insert(rho_key);
        Ok(self.record(vid, id_key, secrets.signing_key, secrets.opening.scalar().clone(), reference))
    }

    fn admit(&self, vid: &VoterId) -> Result<String, RegistrarError> {
        self.require_phase(Phase::Open)?;
        if self.voters.contains_key(vid) {
            return Err(RegistrarError::DuplicateVoter(vid.clone()));
        }
        let id_key = self.params.scalar_hex(&self.params.identity_scalar(vid.as_str()));
        if let Some(existing) = self.identity_index.get(&id_key) {
            return Err(RegistrarError::IdentityCollision { new: vid.clone(), existing: existing.clone() });
        }
        Ok(id_key)
    }

    fn record(
        &mut self,
        vid: &VoterId,
        id_key: String,
        signing_key: SigningKey,
        opening: Scalar,
        reference: Commitment,
    ) -> RegistryRecord {
        let record = RegistryRecord { verifying_key: signing_key.verifying_key(&self.params), reference };
        self.identity_index.insert(id_key, vid.clone());
        self.voters.insert(vid.clone(), VoterRecord { record: record.clone(), cloned_from: None });
        self.secrets.insert(vid.clone(), VoterSecrets { signing_key, opening: ReferenceOpening::new(opening) });
        self.log.push(format!("credentials generated for {vid}"));
        record
    }

    // Both samplers are bounded so an exhausted toy group fails instead of spinning.
    fn fresh_signing_key(&mut self) -> Result<SigningKey, RegistrarError> {
        for _ in 0..256 {
            let s = SigningKey::generate(&self.params, &mut self.rng);
            if self.verifying_keys.insert(self.params.element_hex(s.verifying_key(&self.params).element())) {
                return Ok(s);
            }
        }
        Err(RegistrarError::KeySpaceExhausted)
    }

    fn fresh_reference(&mut self, vid: &VoterId) -> Result<(Scalar, Commitment), RegistrarError> {
        for _ in 0..256 {
            let t = self.params.random_scalar(&mut self.rng);
            let rho = commit_identity(&self.params, vid.as_str(), &t);
            let key = self.params.element_hex(rho.element());
            if self.references.insert(key) {
                return Ok((t, rho));
            }
        }
        Err(RegistrarError::ReferenceSpaceExhausted)
    }

    pub fn close(&mut self) -> Result<(), RegistrarError> {
        self.require_phase(Phase::Open)?;
        self.phase = Phase::Closed;
        self.log.push(format!("registration closed with {} records", self.distinct_records().len()));
        Ok(())
    }

    /// Records sorted by `rho` (numeric order of equal-width encodings is
    /// byte order), one per distinct credential.
    fn distinct_records(&self) -> Vec<RegistryRecord> {
        let mut records: Vec<RegistryRecord> =
            self.voters.values().filter(|v| v.cloned_from.is_none()).map(|v| v.record.clone()).collect();
        records.sort_by(|a, b| a.reference.cmp(&b.reference).then_with(|| a.verifying_key.cmp(&b.verifying_key)));
        records.dedup();
        records
    }

    /// Emits the records `(p_i, rho_i)` without identifiers.
    ///
    /// The result depends only on the set of records and the policy: records
    /// are first sorted by the `rho` encoding, then optionally shuffled.
    pub fn publish_registry(&mut self, order: OrderPolicy) -> Result<RegistryBoard, RegistrarError> {
        if self.phase == Phase::Open {
            return Err(RegistrarError::WrongPhase { expected: Phase::Closed, actual: self.phase });
        }
        let mut records = self.distinct_records();
        if let OrderPolicy::Shuffled { seed } = order {
            records.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        }
        self.phase = Phase::Published;
        self.log.push(format!("registry published: {} records, order={}", records.len(), order.label()));
        Ok(RegistryBoard::new(self.params.without_trapdoor(), order.label(), records))
    }

    /// Hands `(s, t)` to the voter and erases the registrar's copy unless retained.
    pub fn deliver_and_erase(&mut self, vid: &VoterId) -> Result<CredentialPackage, RegistrarError> {
        if self.config.mode != DeliveryMode::Direct {
            return Err(RegistrarError::ModeMismatch { expected: DeliveryMode::Direct });
        }
        if !self.voters.contains_key(vid) {
            return Err(RegistrarError::UnknownVoter(vid.clone()));
        }
        let secrets = match self.config.retention {
            RetentionPolicy::EraseOnDelivery => self.secrets.remove(vid),
            RetentionPolicy::RetainForRedelivery => self.secrets.get(vid).cloned(),
        }
        .ok_or_else(|| RegistrarError::SecretsErased(vid.clone()))?;
        let redelivery = !self.delivered.insert(vid.clone());
        self.log.push(format!(
            "{} to {vid}: retention={:?}",
            if redelivery { "credentials re-delivered" } else { "credentials delivered" },
            self.config.retention
        ));
        Ok(self.channel.send(CredentialPackage::Direct { vid: vid.clone(), secrets }))
    }

    /// Passcode delivery: the voter gets `tau`, the server gets the sealed
    /// credentials and a hash of the derived login password.
    pub fn provision_passcode_mode(
        &mut self,
        vid: &VoterId,
    ) -> Result<(CredentialPackage, ServerProvisioningRecord), RegistrarError> {
        if self.config.mode != DeliveryMode::Passcode {
            return Err(RegistrarError::ModeMismatch { expected: DeliveryMode::Passcode });
        }
        if !self.voters.contains_key(vid) {
            return Err(RegistrarError::UnknownVoter(vid.clone()));
        }
        let mut secrets = self.secrets.get(vid).cloned().ok_or_else(|| RegistrarError::SecretsErased(vid.clone()))?;
        let passcode = Passcode::generate(&mut self.rng);
        let mut derived = derive_from_passcode(&passcode);
        let sealed =
            seal(&self.params, &derived.seal_key, &secrets.signing_key, secrets.opening.scalar(), &mut self.rng);
        let record = ServerProvisioningRecord {
            vid: vid.clone(),
            password_verifier: PasswordVerifier::new(&derived.login_password, &mut self.rng),
            sealed,
        };
        derived.zeroize();
        secrets.zeroize();
        if self.config.retention == RetentionPolicy::EraseOnDelivery {
            if let Some(mut stored) = self.secrets.remove(vid) {
                stored.zeroize();
            }
        }
        self.delivered.insert(vid.clone());
        self.log.push(format!("passcode provisioned for {vid}: retention={:?}", self.config.retention));
        let package = self.channel.send(CredentialPackage::Passcode { vid: vid.clone(), passcode });
        Ok((package, record))
    }

    /// Ends a retention window: erases every retained secret.
    pub fn purge_retained(&mut self) {
        let n = self.secrets.len();
        for (_, mut s) in std::mem::take(&mut self.secrets) {
            s.zeroize();
        }
        self.log.push(format!("retention window closed: {n} secret sets erased"));
    }

    /// Adversarial: gives `vid_b` the credentials already generated for `vid_a`.
    ///
    /// The registry keeps a single record for both. Returns the two direct
    /// packages, identical apart from the identifier.
    pub fn misbehave_duplicate_credentials(
        &mut self,
        vid_a: &VoterId,
        vid_b: &VoterId,
    ) -> Result<(CredentialPackage, CredentialPackage), RegistrarError> {
        if !self.config.adversarial {
            return Err(RegistrarError::OperationUnavailable);
        }
        let record = self.record_for(vid_a).cloned().ok_or_else(|| RegistrarError::UnknownVoter(vid_a.clone()))?;
        if self.voters.contains_key(vid_b) {
            return Err(RegistrarError::DuplicateVoter(vid_b.clone()));
        }
        let secrets = self.secrets.get(vid_a).cloned().ok_or_else(|| RegistrarError::SecretsErased(vid_a.clone()))?;
        self.voters.insert(vid_b.clone(), VoterRecord { record, cloned_from: Some(vid_a.clone()) });
        self.delivered.insert(vid_a.clone());
        self.delivered.insert(vid_b.clone());
        if self.config.retention == RetentionPolicy::EraseOnDelivery {
            self.secrets.remove(vid_a);
        }
        let a = self.channel.send(CredentialPackage::Direct { vid: vid_a.clone(), secrets: secrets.clone() });
        let b = self.channel.send(CredentialPackage::Direct { vid: vid_b.clone(), secrets });
        Ok((a, b))
    }

    fn require_phase(&self, expected: Phase) -> Result<(), RegistrarError> {
        if self.phase != expected {
            return Err(RegistrarError::WrongPhase { expected, actual: self.phase });
        }
        Ok(())
    }
}
