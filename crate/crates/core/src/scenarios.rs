//! End-to-end elections and attack scenarios.
//!
//! Every actor draws from its own ChaCha20 stream derived from the scenario
//! seed and a fixed label, clocks are logical, and casts are submitted in
//! voter order, so a report is a pure function of its configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::audit::{AuditReport, CheckOutcome, SecondDevice};
use crate::board::{scan_privacy_leakage, verify_eligibility};
use crate::client::{create_ballot, ClientError, ElectionInfo, VoterClient};
use crate::crypto::{
    commit, decrypt, derive_from_passcode, equivocate, unseal, verify_commitment, Codebook, ElGamalKeypair,
    GroupParams, LoginPassword, Profile, Scalar,
};
use crate::protocol::{DeliveryMode, Protection, ReferenceOpening, RevotePolicy, VoterId, VoterSecrets};
use crate::registrar::{CredentialPackage, OrderPolicy, Registrar, RegistrarConfig, RetentionPolicy};
use crate::server::{CastError, RejectionReason, ServerConfig, ServerFaults, VotingServer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{stage}: {message}")]
pub struct ScenarioError {
    pub stage: &'static str,
    pub message: String,
}

impl ScenarioError {
    pub fn new(stage: &'static str, message: impl ToString) -> Self {
        ScenarioError { stage, message: message.to_string() }
    }
}

fn at<E: ToString>(stage: &'static str) -> impl Fn(E) -> ScenarioError {
    move |e| ScenarioError::new(stage, e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Honest,
    Clash,
    CrossVoting,
    Stuffing,
    Privacy,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Honest,
        ScenarioKind::Clash,
        ScenarioKind::CrossVoting,
        ScenarioKind::Stuffing,
        ScenarioKind::Privacy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Honest => "honest",
            ScenarioKind::Clash => "clash",
            ScenarioKind::CrossVoting => "cross-voting",
            ScenarioKind::Stuffing => "stuffing",
            ScenarioKind::Privacy => "privacy",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElectionConfig {
    pub profile: Profile,
    pub voters: usize,
    pub mode: DeliveryMode,
    pub two_factor: bool,
    pub revote: RevotePolicy,
    pub protection: Protection,
    pub choices: usize,
    pub seed: u64,
    pub order: OrderPolicy,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig {
            profile: Profile::TestSmall,
            voters: 10,
            mode: DeliveryMode::Direct,
            two_factor: false,
            revote: RevotePolicy::Forbidden,
            protection: Protection::Augmented,
            choices: 3,
            seed: 1,
            order: OrderPolicy::Sorted,
        }
    }
}

impl ElectionConfig {
    fn params(&self) -> Result<GroupParams, ScenarioError> {
        GroupParams::for_profile(self.profile)
            .ok_or_else(|| ScenarioError::new("config", format!("profile {} has no built-in parameters", self.profile)))
    }
}

/// Who the attacker controls in a ballot-stuffing cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub struct Compromise {
    pub registrar: bool,
    pub server: bool,
}

impl Compromise {
    pub fn label(self) -> &'static str {
        match (self.registrar, self.server) {
            (true, true) => "registrar+server",
            (true, false) => "registrar-only",
            (false, true) => "server-only",
            (false, false) => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub struct StuffingCell {
    pub mode: DeliveryMode,
    pub two_factor: bool,
    pub compromise: Compromise,
    /// Expected attack success; cells without one are reported, not asserted.
    pub expect: Option<bool>,
}

impl StuffingCell {
    const fn new(mode: DeliveryMode, two_factor: bool, registrar: bool, server: bool, expect: bool) -> Self {
        StuffingCell { mode, two_factor, compromise: Compromise { registrar, server }, expect: Some(expect) }
    }

    /// The eight cells {direct, passcode} x {2FA off, on} x {registrar-only,
    /// registrar+server}, then the four server-only cells.
    pub fn default_matrix() -> Vec<StuffingCell> {
        use DeliveryMode::{Direct, Passcode};
        vec![
            StuffingCell::new(Direct, false, true, false, false),
            StuffingCell::new(Direct, true, true, false, false),
            StuffingCell::new(Passcode, false, true, false, true),
            StuffingCell::new(Passcode, true, true, false, false),
            StuffingCell::new(Direct, false, true, true, true),
            StuffingCell::new(Direct, true, true, true, true),
            StuffingCell::new(Passcode, false, true, true, true),
            StuffingCell::new(Passcode, true, true, true, true),
            StuffingCell::new(Direct, false, false, true, false),
            StuffingCell::new(Direct, true, false, true, false),
            StuffingCell::new(Passcode, false, false, true, false),
            StuffingCell::new(Passcode, true, false, true, false),
        ]
    }

    fn label(&self) -> String {
        format!("{}/2fa-{}/{}", self.mode, on_off(self.two_factor), self.compromise.label())
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// A scenario definition as read from a config file. Unset fields take the
/// [`ElectionConfig`] defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Option<ScenarioKind>,
    pub profile: Option<Profile>,
    pub voters: Option<usize>,
    pub mode: Option<DeliveryMode>,
    pub two_factor: Option<bool>,
    pub revote: Option<RevotePolicy>,
    pub baseline_anon_creds: Option<bool>,
    pub choices: Option<usize>,
    pub seed: Option<u64>,
    pub shuffle_registry: Option<bool>,
    pub cells: Option<Vec<StuffingCell>>,
}

impl ScenarioSpec {
    /// Fields set in `other` win.
    pub fn overlay(self, other: ScenarioSpec) -> ScenarioSpec {
        ScenarioSpec {
            scenario: other.scenario.or(self.scenario),
            profile: other.profile.or(self.profile),
            voters: other.voters.or(self.voters),
            mode: other.mode.or(self.mode),
            two_factor: other.two_factor.or(self.two_factor),
            revote: other.revote.or(self.revote),
            baseline_anon_creds: other.baseline_anon_creds.or(self.baseline_anon_creds),
            choices: other.choices.or(self.choices),
            seed: other.seed.or(self.seed),
            shuffle_registry: other.shuffle_registry.or(self.shuffle_registry),
            cells: other.cells.or(self.cells),
        }
    }

    /// `seed` is used when the spec leaves it unset.
    pub fn election_config(&self, seed: u64) -> ElectionConfig {
        let d = ElectionConfig::default();
        let seed = self.seed.unwrap_or(seed);
        ElectionConfig {
            profile: self.profile.unwrap_or(d.profile),
            voters: self.voters.unwrap_or(d.voters),
            mode: self.mode.unwrap_or(d.mode),
            two_factor: self.two_factor.unwrap_or(d.two_factor),
            revote: self.revote.unwrap_or(d.revote),
            protection: if self.baseline_anon_creds.unwrap_or(false) {
                Protection::Baseline
            } else {
                Protection::Augmented
            },
            choices: self.choices.unwrap_or(d.choices),
            seed,
            order: if self.shuffle_registry.unwrap_or(false) {
                OrderPolicy::Shuffled { seed: derive_u64(seed, "registry-order") }
            } else {
                OrderPolicy::Sorted
            },
        }
    }
}

/// Independent stream for one actor: ChaCha20 keyed by `SHA-256(seed_be || label)`.
pub fn actor_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

fn derive_u64(seed: u64, label: &str) -> u64 {
    actor_rng(seed, label).gen()
}

/// `voter-01`, `voter-02`, ... skipping names whose identity scalar collides
/// with an earlier one (only possible in a toy group).
pub fn voter_ids(params: &GroupParams, n: usize) -> Result<Vec<VoterId>, ScenarioError> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for i in 1.. {
        if out.len() == n {
            break;
        }
        if seen.len() as u64 >= u64::try_from(params.order().clone()).unwrap_or(u64::MAX) {
            return Err(ScenarioError::new(
                "config",
                format!("the {} group admits at most {} distinct voter identities", params.profile(), seen.len()),
            ));
        }
        let vid = VoterId::new(format!("voter-{i:02}")).expect("generated ids are valid");
        let x = params.scalar_hex(&params.identity_scalar(vid.as_str()));
        if seen.insert(x, ()).is_none() {
            out.push(vid);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct SetupOptions {
    pub faults: ServerFaults,
    /// The registrar hands voter `.0`'s credentials to voter `.1` as well.
    pub duplicate: Option<(usize, usize)>,
    /// The delivery channel is wiretapped.
    pub tap_channel: bool,
}

/// All actors of one election, wired and past registration.
pub struct Election {
    pub config: ElectionConfig,
    /// Includes the trapdoor in the test group; actors only get [`GroupParams::without_trapdoor`].
    pub params: GroupParams,
    pub info: Arc<ElectionInfo>,
    pub trustee: ElGamalKeypair,
    pub registrar: Registrar,
    pub server: VotingServer,
    pub voters: Vec<VoterId>,
    pub clients: Vec<VoterClient>,
    pub registry_text: String,
}

impl Election {
    pub fn setup(config: &ElectionConfig, options: SetupOptions) -> Result<Election, ScenarioError> {
        if config.voters == 0 {
            return Err(ScenarioError::new("config", "at least one voter is required"));
        }
        let params = config.params()?;
        let public = params.without_trapdoor();
        let voters = voter_ids(&params, config.voters)?;
        let trustee = ElGamalKeypair::generate(&public, &mut actor_rng(config.seed, "trustee"));
        let codebook = Codebook::new(&public, config.choices).map_err(at("config"))?;

        let mut registrar = Registrar::new(
            public.clone(),
            RegistrarConfig {
                mode: config.mode,
                retention: RetentionPolicy::EraseOnDelivery,
                adversarial: options.duplicate.is_some(),
            },
            actor_rng(config.seed, "registrar"),
        );
        if options.tap_channel {
            registrar.channel_mut().enable_tap();
        }
        for (i, vid) in voters.iter().enumerate() {
            if options.duplicate.is_some_and(|(_, b)| b == i) {
                continue;
            }
            registrar.generate_credentials(vid).map_err(at("registration"))?;
        }
        let mut duplicated = BTreeMap::new();
        if let Some((a, b)) = options.duplicate {
            if config.mode != DeliveryMode::Direct {
                return Err(ScenarioError::new("registration", "credential duplication requires direct delivery"));
            }
            let (pa, pb) =
                registrar.misbehave_duplicate_credentials(&voters[a], &voters[b]).map_err(at("registration"))?;
            duplicated.insert(a, pa);
            duplicated.insert(b, pb);
        }
        registrar.close().map_err(at("registration"))?;
        let registry = registrar.publish_registry(config.order).map_err(at("publication"))?;
        let registry_text = registry.to_text();

        let mut server = VotingServer::new(
            public.clone(),
            ServerConfig {
                mode: config.mode,
                two_factor: config.two_factor,
                revote: config.revote,
                protection: config.protection,
                faults: options.faults,
            },
            &registry,
            actor_rng(config.seed, "server"),
        );
        let info = Arc::new(ElectionInfo {
            params: public,
            election_key: trustee.public().clone(),
            codebook,
            server_key: server.ack_public_key().clone(),
            registry,
        });

        let mut clients = Vec::with_capacity(voters.len());
        for (i, vid) in voters.iter().enumerate() {
            let mut client = VoterClient::new(
                vid.clone(),
                Arc::clone(&info),
                config.protection,
                actor_rng(config.seed, &format!("client/{vid}")),
            );
            let (package, enrollment) = match config.mode {
                DeliveryMode::Direct => {
                    let package = match duplicated.remove(&i) {
                        Some(p) => p,
                        None => registrar.deliver_and_erase(vid).map_err(at("delivery"))?,
                    };
                    (package, server.enroll_direct(vid).map_err(at("enrollment"))?)
                }
                DeliveryMode::Passcode => {
                    let (package, record) = registrar.provision_passcode_mode(vid).map_err(at("delivery"))?;
                    (package, server.enroll_passcode(record).map_err(at("enrollment"))?)
                }
            };
            client.load_package(package).map_err(at("delivery"))?;
            client.set_enrollment(enrollment);
            client.set_keep_after_cast(config.revote == RevotePolicy::LastCounts);
            clients.push(client);
        }

        Ok(Election {
            config: config.clone(),
            params,
            info,
            trustee,
            registrar,
            server,
            voters,
            clients,
            registry_text,
        })
    }

    /// The codebook index each voter picks, drawn from the scenario seed.
    pub fn planned_choices(&self, label: &str) -> Vec<usize> {
        let mut rng = actor_rng(self.config.seed, label);
        self.voters.iter().map(|_| rng.gen_range(0..self.config.choices)).collect()
    }

    pub fn audit(&mut self, voter: usize, payload_line: &str) -> Result<AuditReport, ScenarioError> {
        let login = self.clients[voter].login_credentials().ok_or_else(|| ScenarioError::new("audit", "no login"))?;
        let mut device = SecondDevice::new(self.voters[voter].clone(), self.config.protection);
        device.audit(&self.info, payload_line, &login, &mut self.server).map_err(at("audit"))
    }

    pub fn ballot_box_text(&self) -> String {
        self.server.export_ballot_box()
    }

    /// Trustee decryption of the counted ballots: counts per codebook index.
    ///
    /// Under `last-counts` only the last entry per reference is counted.
    pub fn tally(&self) -> Result<Vec<usize>, ScenarioError> {
        let params = &self.info.params;
        let entries = self.server.entries();
        let mut last_per_reference: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, entry) in entries.iter().enumerate() {
            last_per_reference.insert(params.element_hex(entry.ballot.reference.element()), idx);
        }
        let counted: Vec<usize> = match self.config.revote {
            RevotePolicy::Forbidden => (0..entries.len()).collect(),
            RevotePolicy::LastCounts => last_per_reference.into_values().collect(),
        };
        let mut counts = vec![0usize; self.config.choices];
        for idx in counted {
            let ballot = &entries[idx].ballot;
            let m = decrypt(params, self.trustee.secret(), &ballot.ciphertext).map_err(at("tally"))?;
            let choice = self.info.codebook.decode(&m).ok_or_else(|| {
                ScenarioError::new("tally", format!("entry {} decrypts outside the codebook", idx + 1))
            })?;
            counts[choice] += 1;
        }
        Ok(counts)
    }
}

fn render_counts(counts: &[usize]) -> String {
    counts.iter().enumerate().map(|(i, c)| format!("{i}:{c}")).collect::<Vec<_>>().join(",")
}

fn count_choices(choices: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &c in choices {
        counts[c] += 1;
    }
    counts
}

/// Result of one scenario: ordered `key=value` facts, named assertions and
/// the public artifacts the run produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScenarioReport {
    pub scenario: String,
    pub facts: Vec<(String, String)>,
    pub assertions: Vec<(String, bool)>,
    /// File name to content, e.g. `registry.txt`, `ballots.txt`.
    pub artifacts: BTreeMap<String, String>,
}

impl ScenarioReport {
    pub fn new(scenario: ScenarioKind, config: &ElectionConfig) -> Self {
        let mut r = ScenarioReport { scenario: scenario.as_str().to_string(), ..Default::default() };
        r.fact("profile", config.profile);
        r.fact("seed", config.seed);
        r
    }

    pub fn fact(&mut self, key: impl Into<String>, value: impl ToString) {
        self.facts.push((key.into(), value.to_string()));
    }

    pub fn assert(&mut self, name: impl Into<String>, holds: bool) {
        self.assertions.push((name.into(), holds));
    }

    pub fn all_hold(&self) -> bool {
        self.assertions.iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = format!("scenario={}\n", self.scenario);
        for (k, v) in &self.facts {
            let _ = writeln!(out, "{k}={v}");
        }
        for (name, ok) in &self.assertions {
            let _ = writeln!(out, "assert.{name}={}", if *ok { "PASS" } else { "FAIL" });
        }
        let _ = writeln!(out, "result={}", if self.all_hold() { "PASS" } else { "FAIL" });
        out
    }
}

pub fn run(kind: ScenarioKind, config: &ElectionConfig, spec: &ScenarioSpec) -> Result<ScenarioReport, ScenarioError> {
    match kind {
        ScenarioKind::Honest => run_honest_election(config),
        ScenarioKind::Clash => run_clash_attack(config),
        ScenarioKind::CrossVoting => run_cross_voting(config),
        ScenarioKind::Stuffing => {
            let cells = spec.cells.clone().unwrap_or_else(StuffingCell::default_matrix);
            run_ballot_stuffing_matrix(config, &cells)
        }
        ScenarioKind::Privacy => run_everlasting_privacy_demo(config),
    }
}

/// Register, cast, audit, verify the board and tally. Under `last-counts`
/// every other voter casts a second time with a different choice.
pub fn run_honest_election(config: &ElectionConfig) -> Result<ScenarioReport, ScenarioError> {
    let mut e = Election::setup(config, SetupOptions::default())?;
    let mut report = ScenarioReport::new(ScenarioKind::Honest, config);
    report.fact("voters", e.voters.len());
    report.fact("mode", config.mode);
    report.fact("2fa", on_off(config.two_factor));
    report.fact("protection", config.protection);
    report.fact("revote", config.revote);
    report.fact("choices", config.choices);

    let mut final_choices = e.planned_choices("choices");
    let mut payloads = Vec::with_capacity(e.voters.len());
    let (mut accepted, mut acks_valid) = (0usize, 0usize);
    for (i, &choice) in final_choices.iter().enumerate() {
        let r = e.clients[i].cast(&mut e.server, choice).map_err(at("cast"))?;
        accepted += 1;
        acks_valid += usize::from(r.ack_valid);
        payloads.push(r.payload.to_line(&e.info.params));
    }
    let mut recasts = 0usize;
    if config.revote == RevotePolicy::LastCounts && config.choices > 1 {
        for i in (0..e.voters.len()).step_by(2) {
            final_choices[i] = (final_choices[i] + 1) % config.choices;
            let r = e.clients[i].cast(&mut e.server, final_choices[i]).map_err(at("recast"))?;
            recasts += 1;
            acks_valid += usize::from(r.ack_valid);
            payloads[i] = r.payload.to_line(&e.info.params);
        }
    }
    report.fact("casts_accepted", accepted + recasts);
    report.fact("recasts", recasts);

    let mut audits_pass = 0usize;
    let mut choices_match = 0usize;
    for (i, payload) in payloads.iter().enumerate() {
        let a = e.audit(i, payload)?;
        audits_pass += usize::from(a.verdict());
        choices_match += usize::from(a.choice == Some(final_choices[i]));
    }
    report.fact("audits_passed", audits_pass);

    let box_text = e.ballot_box_text();
    let verification = verify_eligibility(&e.registry_text, &box_text, config.revote).map_err(at("verification"))?;
    report.fact("board_entries", verification.entries_checked);
    report.fact("board_violations", verification.violations.len());

    let openings: Vec<Scalar> = Vec::new();
    let leaks = scan_privacy_leakage(&e.info.params, &e.registry_text, &box_text, &e.voters, &openings);
    report.fact("vid_leaks", leaks.findings.len());

    let expected = count_choices(&final_choices, config.choices);
    let tally = e.tally()?;
    report.fact("tally", render_counts(&tally));
    report.fact("expected_tally", render_counts(&expected));

    let n = e.voters.len();
    report.assert("all_casts_accepted", accepted == n);
    report.assert("all_acks_valid", acks_valid == n + recasts);
    report.assert("all_audits_pass", audits_pass == n);
    report.assert("audited_choices_match", choices_match == n);
    report.assert("board_clean", verification.is_clean() && verification.entries_checked == n + recasts);
    report.assert("exports_free_of_vids", leaks.findings.is_empty());
    report.assert("tally_matches", tally == expected);

    report.artifacts.insert("registry.txt".into(), e.registry_text.clone());
    report.artifacts.insert("ballots.txt".into(), box_text);
    report.artifacts.insert("verification.txt".into(), verification.render());
    Ok(report)
}

struct ClashRun {
    first_verdict: bool,
    second_clash: CheckOutcome,
    second_verdict: bool,
    victim_ballot_other_checks: bool,
}

fn clash_run(config: &ElectionConfig, protection: Protection, victim_first: bool) -> Result<ClashRun, ScenarioError> {
    let mut config = config.clone();
    config.protection = protection;
    config.mode = DeliveryMode::Direct;
    let (a, b) = (0usize, 1usize);
    let mut faults = ServerFaults::default();
    let vids = voter_ids(&config.params()?, config.voters)?;
    faults.audit_redirect.insert(vids[b].clone(), vids[a].clone());
    let mut e = Election::setup(&config, SetupOptions { faults, duplicate: Some((a, b)), tap_channel: false })?;

    let choices = e.planned_choices("choices");
    let mut payload_a = String::new();
    for i in (0..e.voters.len()).filter(|&i| i != b) {
        let r = e.clients[i].cast(&mut e.server, choices[i]).map_err(at("cast"))?;
        if i == a {
            payload_a = r.payload.to_line(&e.info.params);
        }
    }
    // Both duplicated voters are led to the same ballot and the same payload.
    let (ra, rb) = if victim_first {
        let rb = e.audit(b, &payload_a)?;
        (e.audit(a, &payload_a)?, rb)
    } else {
        let ra = e.audit(a, &payload_a)?;
        (ra, e.audit(b, &payload_a)?)
    };
    Ok(ClashRun {
        first_verdict: ra.verdict(),
        second_clash: rb.clash,
        second_verdict: rb.verdict(),
        victim_ballot_other_checks: [rb.plaintext, rb.ack, rb.fingerprint].iter().all(|c| *c == CheckOutcome::Pass),
    })
}

/// Two voters receive identical credentials; only the first casts and both
/// audit the resulting ballot. Runs each protection in both audit orders.
pub fn run_clash_attack(config: &ElectionConfig) -> Result<ScenarioReport, ScenarioError> {
    if config.voters < 2 {
        return Err(ScenarioError::new("config", "the clash scenario needs at least two voters"));
    }
    let mut report = ScenarioReport::new(ScenarioKind::Clash, config);
    report.fact("voters", config.voters);
    report.fact("mode", DeliveryMode::Direct);
    let vids = voter_ids(&config.params()?, 2)?;
    report.fact("duplicated", format!("{},{}", vids[0], vids[1]));

    for protection in [Protection::Augmented, Protection::Baseline] {
        for (order, victim_first) in [("owner-first", false), ("victim-first", true)] {
            let run = clash_run(config, protection, victim_first)?;
            let key = format!("{protection}.{order}");
            let detected = !run.second_verdict;
            report.fact(format!("{key}.owner_verdict"), pass_fail(run.first_verdict));
            report.fact(format!("{key}.victim_clash"), run.second_clash);
            report.fact(format!("{key}.victim_verdict"), pass_fail(run.second_verdict));
            report.fact(format!("{key}.detected"), detected);
            report.assert(format!("{key}.owner_audit_passes"), run.first_verdict);
            report.assert(format!("{key}.other_checks_pass"), run.victim_ballot_other_checks);
            match protection {
                Protection::Augmented => {
                    report.assert(format!("{key}.clash_detected"), detected && run.second_clash == CheckOutcome::Fail)
                }
                Protection::Baseline => report.assert(format!("{key}.clash_undetected"), !detected),
            }
        }
    }
    Ok(report)
}

fn pass_fail(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Default)]
struct CrossTally {
    accepted: usize,
    commitment_mismatch: usize,
    other_rejections: BTreeMap<String, usize>,
    owner_untouched: usize,
}

/// For every ordered pair (A, B), A != B: A logs in and submits a ballot
/// built from B's credentials (with B's opening). Each pair runs against a
/// fresh server on the same registry.
pub fn run_cross_voting(config: &ElectionConfig) -> Result<ScenarioReport, ScenarioError> {
    if config.voters < 2 {
        return Err(ScenarioError::new("config", "cross-voting needs at least two voters"));
    }
    let mut config = config.clone();
    config.mode = DeliveryMode::Direct;
    let mut report = ScenarioReport::new(ScenarioKind::CrossVoting, &config);
    report.fact("voters", config.voters);
    report.fact("mode", config.mode);

    let e = Election::setup(&config, SetupOptions { tap_channel: true, ..Default::default() })?;
    let packages: Vec<VoterSecrets> = e
        .registrar
        .channel()
        .tapped()
        .iter()
        .map(|p| match p {
            CredentialPackage::Direct { secrets, .. } => Ok(secrets.clone()),
            CredentialPackage::Passcode { .. } => Err(ScenarioError::new("setup", "expected direct packages")),
        })
        .collect::<Result<_, _>>()?;
    let n = e.voters.len();
    let pairs = n * (n - 1);
    report.fact("pairs", pairs);

    let mut controls_accepted = 0usize;
    for protection in [Protection::Augmented, Protection::Baseline] {
        let mut t = CrossTally::default();
        for a in 0..n {
            for (b, secrets_b) in packages.iter().enumerate() {
                let label = format!("{protection}/{a}/{b}");
                let mut server = fresh_server(&e, protection, &label);
                let info = info_for(&e, &server);
                let password = enroll_all(&mut server, &e.voters)?;
                let session = server.authenticate(&e.voters[a], password[a].expose(), None).map_err(at("login"))?;
                let mut rng = actor_rng(config.seed, &format!("cross/{label}"));
                let (ballot, _) =
                    create_ballot(&info, &e.voters[b], secrets_b, protection, 0, &mut rng).map_err(at("ballot"))?;
                let opening = (protection == Protection::Augmented).then(|| secrets_b.opening.clone());
                let outcome = server.validate_and_cast(session, ballot, opening);
                if a == b {
                    controls_accepted += usize::from(outcome.is_ok() && protection == Protection::Augmented);
                    continue;
                }
                match outcome {
                    Ok(_) => {
                        t.accepted += 1;
                        let owner = &e.voters[b];
                        t.owner_untouched += usize::from(
                            !server.has_voted(owner)
                                && server.login_count(owner) == 0
                                && server.has_voted(&e.voters[a]),
                        );
                    }
                    Err(CastError::Rejected(RejectionReason::CommitmentMismatch)) => t.commitment_mismatch += 1,
                    Err(other) => *t.other_rejections.entry(other.to_string()).or_default() += 1,
                }
            }
        }
        let key = protection.as_str();
        report.fact(format!("{key}.accepted"), t.accepted);
        report.fact(format!("{key}.rejected_commitment_mismatch"), t.commitment_mismatch);
        report.fact(format!("{key}.rejected_other"), t.other_rejections.values().sum::<usize>());
        match protection {
            Protection::Augmented => {
                report.assert("augmented.all_pairs_rejected_commitment_mismatch", t.commitment_mismatch == pairs);
            }
            Protection::Baseline => {
                report.fact("baseline.owner_never_logged_in_nor_marked_voted", t.owner_untouched);
                report.assert("baseline.all_pairs_accepted", t.accepted == pairs);
                report.assert("baseline.owner_appears_unused", t.owner_untouched == pairs);
            }
        }
    }
    report.fact("augmented.own_credentials_accepted", controls_accepted);
    report.assert("augmented.own_credentials_accepted", controls_accepted == n);
    Ok(report)
}

fn fresh_server(e: &Election, protection: Protection, label: &str) -> VotingServer {
    let mut config = e.server.config().clone();
    config.protection = protection;
    VotingServer::new(
        e.info.params.clone(),
        config,
        &e.info.registry,
        actor_rng(e.config.seed, &format!("server/{label}")),
    )
}

fn info_for(e: &Election, server: &VotingServer) -> ElectionInfo {
    ElectionInfo { server_key: server.ack_public_key().clone(), ..(*e.info).clone() }
}

fn enroll_all(server: &mut VotingServer, voters: &[VoterId]) -> Result<Vec<LoginPassword>, ScenarioError> {
    voters
        .iter()
        .map(|v| {
            let en = server.enroll_direct(v).map_err(at("enrollment"))?;
            en.login_password.ok_or_else(|| ScenarioError::new("enrollment", "direct enrollment without password"))
        })
        .collect()
}

/// What the attacker in one stuffing cell achieved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuffingOutcome {
    pub success: bool,
    /// The step that stopped the attack, or `none`.
    pub blocked_at: &'static str,
}

/// The attacker tries to cast a valid ballot for a voter who never votes,
/// using only what the compromised parties can provide:
///
/// * registrar: the wiretapped delivery (`(s, t)` or the passcode),
/// * server: forged sessions and a copy of its database (password hashes,
///   second-factor tokens, sealed credentials).
pub fn attempt_stuffing(config: &ElectionConfig, cell: &StuffingCell) -> Result<StuffingOutcome, ScenarioError> {
    let mut config = config.clone();
    config.mode = cell.mode;
    config.two_factor = cell.two_factor;
    config.seed = derive_u64(config.seed, &format!("stuffing/{}", cell.label()));
    let faults = ServerFaults { colluding: cell.compromise.server, ..Default::default() };
    let mut e =
        Election::setup(&config, SetupOptions { faults, tap_channel: cell.compromise.registrar, duplicate: None })?;
    let victim = e.voters[0].clone();
    let blocked = |step| Ok(StuffingOutcome { success: false, blocked_at: step });

    let tapped = e.registrar.channel().tapped().iter().find(|p| p.vid() == &victim).cloned();
    let stolen = cell.compromise.server.then(|| e.server.steal_database());

    let session = if cell.compromise.server {
        e.server.forge_session(&victim).map_err(at("forge"))?
    } else {
        let password = match &tapped {
            Some(CredentialPackage::Passcode { passcode, .. }) => derive_from_passcode(passcode).login_password,
            // Direct-mode passwords are issued by the server; the registrar never sees them.
            _ => LoginPassword::new("guess"),
        };
        let token = stolen.as_ref().and_then(|db| db.auth.get(&victim)).and_then(|r| r.second_factor.clone());
        match e.server.authenticate(&victim, password.expose(), token.as_ref().map(|t| t.expose())) {
            Ok(s) => s,
            Err(_) => return blocked("authenticate"),
        }
    };

    let secrets = match (&tapped, cell.mode) {
        (Some(CredentialPackage::Direct { secrets, .. }), _) => secrets.clone(),
        (Some(CredentialPackage::Passcode { passcode, .. }), _) => {
            let sealed = match e.server.retrieve_sealed_credentials(session) {
                Ok(s) => s,
                Err(_) => return blocked("retrieve-sealed"),
            };
            match unseal(&e.info.params, &derive_from_passcode(passcode).seal_key, &sealed) {
                Ok((signing_key, t)) => VoterSecrets { signing_key, opening: ReferenceOpening::new(t) },
                Err(_) => return blocked("unseal"),
            }
        }
        (None, DeliveryMode::Passcode) => {
            // Sealed blobs without the passcode: try the only key available, one derived from a guess.
            let sealed = stolen.as_ref().and_then(|db| db.sealed.get(&victim)).cloned();
            let guess = crate::crypto::Passcode::new("0000-0000-0000-0000-0000").map_err(at("unseal"))?;
            match sealed.map(|s| unseal(&e.info.params, &derive_from_passcode(&guess).seal_key, &s)) {
                Some(Ok((signing_key, t))) => VoterSecrets { signing_key, opening: ReferenceOpening::new(t) },
                _ => return blocked("unseal"),
            }
        }
        (None, DeliveryMode::Direct) => return blocked("credentials"),
    };

    let mut rng = actor_rng(config.seed, "attacker");
    let (ballot, _) = match create_ballot(&e.info, &victim, &secrets, config.protection, 0, &mut rng) {
        Ok(b) => b,
        Err(ClientError::RegistryMismatch) => return blocked("credentials"),
        Err(other) => return Err(ScenarioError::new("ballot", other)),
    };
    let opening = (config.protection == Protection::Augmented).then(|| secrets.opening.clone());
    if e.server.validate_and_cast(session, ballot, opening).is_err() {
        return blocked("cast");
    }
    let verification =
        verify_eligibility(&e.registry_text, &e.ballot_box_text(), config.revote).map_err(at("verify"))?;
    if !verification.is_clean() {
        return blocked("board");
    }
    Ok(StuffingOutcome { success: true, blocked_at: "none" })
}

pub fn run_ballot_stuffing_matrix(
    config: &ElectionConfig,
    cells: &[StuffingCell],
) -> Result<ScenarioReport, ScenarioError> {
    let mut report = ScenarioReport::new(ScenarioKind::Stuffing, config);
    report.fact("voters", config.voters);
    report.fact("cells", cells.len());
    for cell in cells {
        let outcome = attempt_stuffing(config, cell)?;
        let key = cell.label();
        report.fact(format!("{key}.success"), outcome.success);
        report.fact(format!("{key}.blocked_at"), outcome.blocked_at);
        if let Some(expected) = cell.expect {
            report.assert(format!("{key}.success_is_{expected}"), outcome.success == expected);
        }
    }
    Ok(report)
}

/// In the trapdoor group: for one published reference, an opening exists
/// for every registered identifier.
pub fn run_everlasting_privacy_demo(config: &ElectionConfig) -> Result<ScenarioReport, ScenarioError> {
    let params = config.params()?;
    if params.trapdoor().is_none() {
        return Err(ScenarioError::new("equivocate", crate::crypto::CommitmentError::NoTrapdoor));
    }
    let mut e = Election::setup(config, SetupOptions::default())?;
    let mut report = ScenarioReport::new(ScenarioKind::Privacy, config);
    report.fact("voters", e.voters.len());

    let choices = e.planned_choices("choices");
    let mut true_openings = Vec::with_capacity(e.voters.len());
    for (i, &choice) in choices.iter().enumerate() {
        let r = e.clients[i].cast(&mut e.server, choice).map_err(at("cast"))?;
        true_openings.push(r.payload.opening);
    }
    let entry = e.server.entries().first().cloned().ok_or_else(|| ScenarioError::new("cast", "empty ballot box"))?;
    let rho = entry.ballot.reference;
    report.fact("rho", params.element_hex(rho.element()));

    // The harness knows the true author of the first entry; the openings below do not depend on it.
    let x_true = params.identity_scalar(e.voters[0].as_str());
    let t_true = true_openings[0].scalar().clone();
    let mut valid = 0usize;
    let mut brute_force_agree = 0usize;
    let mut true_listed = false;
    let all_r: Vec<Scalar> = (0..params_order_u64(&params)).map(|r| params.scalar(r)).collect();
    for vid in &e.voters {
        let x = params.identity_scalar(vid.as_str());
        let t_star = equivocate(&params, &rho, &x_true, &t_true, &x).map_err(at("equivocate"))?;
        let ok = verify_commitment(&params, &rho, &x, &t_star);
        valid += usize::from(ok);
        let solutions: Vec<&Scalar> = all_r.iter().filter(|r| commit(&params, &x, r) == rho).collect();
        brute_force_agree += usize::from(solutions == [&t_star]);
        true_listed |= x == x_true && t_star == t_true;
        report.fact(
            format!("opening.{vid}"),
            format!("x={} t={} valid={ok}", params.scalar_hex(&x), params.scalar_hex(&t_star)),
        );
    }
    let n = e.voters.len();
    report.fact("valid_openings", valid);
    report.assert("every_voter_has_a_valid_opening", valid == n);
    report.assert("opening_is_unique_per_voter", brute_force_agree == n);
    report.assert("true_opening_among_them", true_listed);

    let table = opening_table(&params);
    let q = all_r.len();
    let per_value_ok = table.len() == q && table.values().all(|xs| xs.len() == q && is_permutation_of_field(xs, q));
    report.fact("table.commitment_values", table.len());
    report.fact(
        "table.openings_per_value",
        table.values().map(Vec::len).min().unwrap_or(0).to_string()
            + ".."
            + &table.values().map(Vec::len).max().unwrap_or(0).to_string(),
    );
    report.assert("each_value_has_q_openings_one_per_x", per_value_ok);
    Ok(report)
}

fn params_order_u64(params: &GroupParams) -> u64 {
    u64::try_from(params.order().clone()).expect("toy group order fits in u64")
}

/// Commitment value -> the `x` of each opening `(x, r)`, over all of `Z_q^2`.
fn opening_table(params: &GroupParams) -> BTreeMap<String, Vec<u64>> {
    let q = params_order_u64(params);
    let mut table: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for x in 0..q {
        for r in 0..q {
            let c = commit(params, &params.scalar(x), &params.scalar(r));
            table.entry(params.element_hex(c.element())).or_default().push(x);
        }
    }
    table
}

fn is_permutation_of_field(xs: &[u64], q: usize) -> bool {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    sorted.iter().copied().eq(0..q as u64)
}
