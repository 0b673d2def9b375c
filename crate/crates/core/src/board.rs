//! The public bulletin board: published registry, exported ballot box, and
//! the checks any observer can run against them.
//!
//! Everything here works on the text formats alone.
//!
//! Registry file:
//!
//! ```text
//! # evercred registry v1
//! # profile=test-small
//! # p=17
//! # q=0b
//! # g=02
//! # h=03
//! # order=sorted
//! 08,03
//! ```
//!
//! `p` and `q` are minimal big-endian hex, `g` and `h` element-width hex; each
//! record line is `p_hex,rho_hex`.
//!
//! Ballot box file: one `seq,c1_hex,c2_hex,rho_hex,sigma_hex` line per entry,
//! no header. The group is taken from the registry.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;

use crate::crypto::{Ciphertext, Commitment, GroupError, GroupParams, Scalar, Signature, VerifyingKey};
use crate::protocol::{Ballot, RegistryRecord, RevotePolicy, VoterId};

const REGISTRY_MAGIC: &str = "# evercred registry v1";

/// Needles shorter than this many bytes match by chance and are not scanned.
pub const MIN_SCAN_NEEDLE_BYTES: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BoardError {
    #[error("registry line {line}: {reason}")]
    Registry { line: usize, reason: String },
    #[error("registry header is missing {0}")]
    MissingHeader(&'static str),
    #[error("invalid group parameters in registry header: {0}")]
    Params(#[from] GroupError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistryBoard {
    params: GroupParams,
    order: String,
    records: Vec<RegistryRecord>,
}

impl RegistryBoard {
    pub fn new(params: GroupParams, order: String, records: Vec<RegistryRecord>) -> Self {
        RegistryBoard { params, order, records }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn order(&self) -> &str {
        &self.order
    }

    pub fn records(&self) -> &[RegistryRecord] {
        &self.records
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        writeln!(out, "{REGISTRY_MAGIC}").unwrap();
        writeln!(out, "# profile={}", p.profile()).unwrap();
        writeln!(out, "# p={}", hex::encode(p.modulus().to_bytes_be())).unwrap();
        writeln!(out, "# q={}", hex::encode(p.order().to_bytes_be())).unwrap();
        writeln!(out, "# g={}", p.element_hex(p.g())).unwrap();
        writeln!(out, "# h={}", p.element_hex(p.h())).unwrap();
        writeln!(out, "# order={}", self.order).unwrap();
        for r in &self.records {
            writeln!(out, "{}", r.to_line(p)).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BoardError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == REGISTRY_MAGIC => {}
            _ => return Err(BoardError::Registry { line: 1, reason: "missing registry magic".into() }),
        }
        let mut header = BTreeMap::new();
        let mut body = Vec::new();
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                let (k, v) = kv.trim().split_once('=').ok_or_else(|| BoardError::Registry {
                    line: i + 1,
                    reason: "header line is not key=value".into(),
                })?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                body.push((i + 1, line));
            }
        }
        let big = |key: &'static str| -> Result<BigUint, BoardError> {
            let v = header.get(key).ok_or(BoardError::MissingHeader(key))?;
            let bytes = hex::decode(v).map_err(|e| GroupError::Hex(e.to_string()))?;
            Ok(BigUint::from_bytes_be(&bytes))
        };
        let params = GroupParams::custom(big("p")?, big("q")?, big("g")?, big("h")?)?;
        let order = header.get("order").cloned().ok_or(BoardError::MissingHeader("order"))?;

        let mut records = Vec::with_capacity(body.len());
        for (line, content) in body {
            let err = |reason: String| BoardError::Registry { line, reason };
            let (p_hex, rho_hex) = content.split_once(',').ok_or_else(|| err("expected p_hex,rho_hex".into()))?;
            let p = params.element_from_hex(p_hex).map_err(|e| err(format!("public key: {e}")))?;
            let rho = params.element_from_hex(rho_hex).map_err(|e| err(format!("reference: {e}")))?;
            records.push(RegistryRecord {
                verifying_key: VerifyingKey::from_element(&params, p).map_err(|e| err(e.to_string()))?,
                reference: Commitment::from_element(rho),
            });
        }
        Ok(RegistryBoard { params, order, records })
    }
}

/// One parsed ballot-box line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublishedBallot {
    pub seq: u64,
    pub ballot: Ballot,
}

pub fn parse_ballot_line(params: &GroupParams, line: &str) -> Result<PublishedBallot, String> {
    let fields: Vec<&str> = line.trim().split(',').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    let seq = fields[0].parse::<u64>().map_err(|e| format!("sequence number: {e}"))?;
    let c1 = params.element_from_hex(fields[1]).map_err(|e| format!("c1: {e}"))?;
    let c2 = params.element_from_hex(fields[2]).map_err(|e| format!("c2: {e}"))?;
    let rho = params.element_from_hex(fields[3]).map_err(|e| format!("reference: {e}"))?;
    let sig_bytes = hex::decode(fields[4]).map_err(|e| format!("signature: {e}"))?;
    let signature = Signature::from_bytes(params, &sig_bytes).map_err(|e| format!("signature: {e}"))?;
    Ok(PublishedBallot {
        seq,
        ballot: Ballot { ciphertext: Ciphertext { c1, c2 }, reference: Commitment::from_element(rho), signature },
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Malformed(String),
    /// No registry record carries this reference.
    UnknownReference,
    /// The signature does not verify under the registered key.
    BadSignature,
    /// Another entry already carries this reference.
    DuplicateReference {
        first_seq: u64,
    },
    /// Sequence numbers must run 1, 2, 3, ...
    SequenceGap {
        expected: u64,
    },
}

impl ViolationKind {
    fn label(&self) -> String {
        match self {
            ViolationKind::Malformed(m) => format!("malformed ({m})"),
            ViolationKind::UnknownReference => "unknown-reference".into(),
            ViolationKind::BadSignature => "bad-signature".into(),
            ViolationKind::DuplicateReference { first_seq } => format!("duplicate-reference (first seq={first_seq})"),
            ViolationKind::SequenceGap { expected } => format!("sequence-gap (expected {expected})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub seq: Option<u64>,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub registry_records: usize,
    pub entries_checked: usize,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "registry_records={}", self.registry_records).unwrap();
        writeln!(out, "entries_checked={}", self.entries_checked).unwrap();
        writeln!(out, "violations={}", self.violations.len()).unwrap();
        for v in &self.violations {
            let seq = v.seq.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            writeln!(out, "violation line={} seq={} kind={}", v.line, seq, v.kind.label()).unwrap();
        }
        writeln!(out, "result={}", if self.is_clean() { "clean" } else { "violations" }).unwrap();
        out
    }
}

/// Eligibility verification from the published files alone.
///
/// Every entry must carry a reference present in the registry, a signature
/// valid under that record's key over `(c, rho)`, and, unless later entries
/// may supersede earlier ones, a reference no other entry carries.
pub fn verify_eligibility(
    registry_text: &str,
    ballot_box_text: &str,
    revote: RevotePolicy,
) -> Result<VerificationReport, BoardError> {
    let registry = RegistryBoard::parse(registry_text)?;
    let params = registry.params();
    let keys: BTreeMap<Vec<u8>, &VerifyingKey> =
        registry.records().iter().map(|r| (params.encode_element(r.reference.element()), &r.verifying_key)).collect();

    let mut report = VerificationReport { registry_records: registry.records().len(), ..Default::default() };
    let mut seen: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    let mut expected_seq = 1u64;
    for (i, raw) in ballot_box_text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        report.entries_checked += 1;
        let entry = match parse_ballot_line(params, raw) {
            Ok(e) => e,
            Err(reason) => {
                report.violations.push(Violation { line, seq: None, kind: ViolationKind::Malformed(reason) });
                continue;
            }
        };
        let mut flag = |kind| report.violations.push(Violation { line, seq: Some(entry.seq), kind });
        if entry.seq != expected_seq {
            flag(ViolationKind::SequenceGap { expected: expected_seq });
        }
        expected_seq = entry.seq + 1;

        let rho = params.encode_element(entry.ballot.reference.element());
        match keys.get(&rho) {
            None => flag(ViolationKind::UnknownReference),
            Some(key) if !entry.ballot.signature_valid(params, key) => flag(ViolationKind::BadSignature),
            Some(_) => {}
        }
        if revote == RevotePolicy::Forbidden {
            if let Some(first_seq) = seen.get(&rho) {
                flag(ViolationKind::DuplicateReference { first_seq: *first_seq });
            }
        }
        seen.entry(rho).or_insert(entry.seq);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LeakKind {
    VoterId,
    IdentityScalar,
    Opening,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Leak {
    pub artifact: &'static str,
    pub kind: LeakKind,
    pub subject: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeakReport {
    pub findings: Vec<Leak>,
    /// Needles skipped because they are too short to scan for meaningfully.
    pub inconclusive: Vec<String>,
}

impl LeakReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.findings {
            writeln!(out, "leak artifact={} kind={:?} subject={}", l.artifact, l.kind, l.subject).unwrap();
        }
        writeln!(out, "inconclusive_needles={}", self.inconclusive.len()).unwrap();
        writeln!(out, "result={}", if self.is_clean() { "clean" } else { "leaks" }).unwrap();
        out
    }
}

/// Looks for voter identifiers, their identity scalars and known openings in
/// the serialized artifacts.
pub fn scan_privacy_leakage(
    params: &GroupParams,
    registry_text: &str,
    ballot_box_text: &str,
    vids: &[VoterId],
    openings: &[Scalar],
) -> LeakReport {
    let artifacts =
        [("registry", registry_text.to_ascii_lowercase()), ("ballot-box", ballot_box_text.to_ascii_lowercase())];
    let mut report = LeakReport::default();
    let mut needles: Vec<(LeakKind, String, Vec<u8>)> = Vec::new();
    for vid in vids {
        needles.push((LeakKind::VoterId, vid.to_string(), vid.as_str().as_bytes().to_vec()));
        let x = params.identity_scalar(vid.as_str());
        needles.push((LeakKind::IdentityScalar, vid.to_string(), x.minimal_hex().into_bytes()));
    }
    for (i, t) in openings.iter().enumerate() {
        needles.push((LeakKind::Opening, format!("opening#{i}"), t.minimal_hex().into_bytes()));
    }
    for (kind, subject, needle) in needles {
        let scanned_len = if kind == LeakKind::VoterId { needle.len() } else { needle.len() / 2 };
        if kind != LeakKind::VoterId && scanned_len < MIN_SCAN_NEEDLE_BYTES {
            report.inconclusive.push(format!("{kind:?}:{subject}"));
            continue;
        }
        for (name, text) in &artifacts {
            let hay = if kind == LeakKind::VoterId {
                contains(text.as_bytes(), &needle.to_ascii_lowercase())
            } else {
                contains(text.as_bytes(), &needle)
            };
            if hay {
                report.findings.push(Leak { artifact: name, kind, subject: subject.clone() });
            }
        }
    }
    report.findings.sort();
    report.findings.dedup();
    report
}

pub(crate) fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}
