use std::collections::BTreeSet;
use std::sync::OnceLock;

use evercred_core::board::{scan_privacy_leakage, verify_eligibility, LeakKind, RegistryBoard, ViolationKind};
use evercred_core::crypto::{commit_identity, GroupParams, Profile, SigningKey};
use evercred_core::protocol::{DeliveryMode, ReferenceOpening, RevotePolicy, VoterId, VoterSecrets};
use evercred_core::registrar::{
    CredentialPackage, OrderPolicy, Registrar, RegistrarConfig, RegistrarError, RetentionPolicy,
};
use evercred_core::scenarios::{actor_rng, voter_ids, Election, ElectionConfig, SetupOptions};

fn registrar(retention: RetentionPolicy) -> Registrar {
    let config = RegistrarConfig { retention, ..Default::default() };
    Registrar::new(GroupParams::test_small(), config, actor_rng(7, "registrar"))
}

fn vids(n: usize) -> Vec<VoterId> {
    voter_ids(&GroupParams::test_small(), n).unwrap()
}

#[test]
fn erase_on_delivery_allows_one_delivery() {
    let mut r = registrar(RetentionPolicy::EraseOnDelivery);
    let v = vids(2);
    for vid in &v {
        r.generate_credentials(vid).unwrap();
    }
    r.close().unwrap();
    assert!(matches!(r.generate_credentials(&VoterId::new("late").unwrap()), Err(RegistrarError::WrongPhase { .. })));
    r.publish_registry(OrderPolicy::Sorted).unwrap();
    assert!(r.holds_secrets_for(&v[0]));
    r.deliver_and_erase(&v[0]).unwrap();
    assert!(!r.holds_secrets_for(&v[0]));
    assert_eq!(r.deliver_and_erase(&v[0]).unwrap_err(), RegistrarError::SecretsErased(v[0].clone()));
    assert_eq!(
        r.deliver_and_erase(&VoterId::new("stranger").unwrap()).unwrap_err(),
        RegistrarError::UnknownVoter(VoterId::new("stranger").unwrap())
    );
    assert!(matches!(r.provision_passcode_mode(&v[1]), Err(RegistrarError::ModeMismatch { .. })));
}

#[test]
fn retention_window_allows_redelivery_until_purged() {
    let mut r = registrar(RetentionPolicy::RetainForRedelivery);
    let v = vids(1);
    r.generate_credentials(&v[0]).unwrap();
    r.close().unwrap();
    r.publish_registry(OrderPolicy::Sorted).unwrap();
    let first = r.deliver_and_erase(&v[0]).unwrap();
    assert_eq!(r.deliver_and_erase(&v[0]).unwrap(), first);
    assert!(r.audit_log().iter().any(|l| l.starts_with("credentials re-delivered")));
    assert!(r.audit_log().iter().any(|l| l.starts_with("trust assumption: the delivery channel")));
    r.purge_retained();
    assert!(!r.holds_secrets_for(&v[0]));
    assert_eq!(r.deliver_and_erase(&v[0]).unwrap_err(), RegistrarError::SecretsErased(v[0].clone()));
}

#[test]
fn duplicates_and_misbehaviour_are_refused() {
    let mut r = registrar(RetentionPolicy::EraseOnDelivery);
    let v = vids(2);
    r.generate_credentials(&v[0]).unwrap();
    assert_eq!(r.generate_credentials(&v[0]).unwrap_err(), RegistrarError::DuplicateVoter(v[0].clone()));
    assert_eq!(r.misbehave_duplicate_credentials(&v[0], &v[1]).unwrap_err(), RegistrarError::OperationUnavailable);
}

fn fixed_secrets(params: &GroupParams, v: &[VoterId]) -> Vec<VoterSecrets> {
    // Keys 1..=n; each opening is the smallest one whose reference is still unused.
    let mut used = BTreeSet::new();
    v.iter()
        .enumerate()
        .map(|(i, vid)| {
            let t = (0..11u64)
                .map(|t| params.scalar(t))
                .find(|t| used.insert(commit_identity(params, vid.as_str(), t)))
                .unwrap();
            VoterSecrets {
                signing_key: SigningKey::from_scalar(params.scalar(i as u64 + 1)).unwrap(),
                opening: ReferenceOpening::new(t),
            }
        })
        .collect()
}

fn registry_from(order_of_import: &[usize], policy: OrderPolicy) -> Result<String, RegistrarError> {
    let params = GroupParams::test_small();
    let v = vids(order_of_import.len());
    let secrets = fixed_secrets(&params, &v);
    let mut r = Registrar::new(params, RegistrarConfig::default(), actor_rng(order_of_import[0] as u64, "any"));
    for &i in order_of_import {
        r.import_credentials(&v[i], secrets[i].clone())?;
    }
    r.close()?;
    Ok(r.publish_registry(policy)?.to_text())
}

#[test]
fn registry_depends_only_on_the_record_set() {
    let forward: Vec<usize> = (0..6).collect();
    let backward: Vec<usize> = (0..6).rev().collect();
    let interleaved = vec![3, 0, 5, 1, 4, 2];
    let a = registry_from(&forward, OrderPolicy::Sorted).unwrap();
    let b = registry_from(&backward, OrderPolicy::Sorted).unwrap();
    let c = registry_from(&interleaved, OrderPolicy::Sorted).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let shuffled = OrderPolicy::Shuffled { seed: 42 };
    let s1 = registry_from(&forward, shuffled).unwrap();
    assert_eq!(s1, registry_from(&interleaved, shuffled).unwrap());
    let lines = |t: &str| t.lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect::<BTreeSet<_>>();
    assert_eq!(lines(&s1), lines(&a));
    assert!(s1.contains("# order=shuffled:42"));
    let sorted_records: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    let mut resorted = sorted_records.clone();
    resorted.sort_by_key(|l| l.split(',').nth(1).unwrap().to_string());
    assert_eq!(sorted_records, resorted);
}

#[test]
fn shuffled_registry_is_reproducible_per_seed() {
    let config = |seed| ElectionConfig { order: OrderPolicy::Shuffled { seed }, ..Default::default() };
    let a = Election::setup(&config(42), SetupOptions::default()).unwrap().registry_text;
    let b = Election::setup(&config(42), SetupOptions::default()).unwrap().registry_text;
    let c = Election::setup(&config(43), SetupOptions::default()).unwrap().registry_text;
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(RegistryBoard::parse(&a).unwrap().records().len(), 10);
}

#[test]
fn import_rejects_reused_keys_and_references() {
    let params = GroupParams::test_small();
    let v = vids(3);
    let secrets = fixed_secrets(&params, &v[..2]);
    let mut r = Registrar::new(params.clone(), RegistrarConfig::default(), actor_rng(1, "r"));
    r.import_credentials(&v[0], secrets[0].clone()).unwrap();
    let same_key = VoterSecrets { signing_key: secrets[0].signing_key.clone(), opening: secrets[1].opening.clone() };
    let result = r.import_credentials(&v[1], same_key);
    assert!(matches!(result, Err(RegistrarError::KeyTaken) | Err(RegistrarError::ReferenceTaken)), "{result:?}");
}

#[test]
fn toy_group_caps_the_electorate() {
    let mut config = ElectionConfig { voters: 11, ..Default::default() };
    assert!(Election::setup(&config, SetupOptions::default()).is_err());
    config.voters = 10;
    assert!(Election::setup(&config, SetupOptions::default()).is_ok());
    config.voters = 0;
    assert!(Election::setup(&config, SetupOptions::default()).is_err());
}

fn honest_board(profile: Profile, voters: usize) -> (String, String, Election) {
    let config = ElectionConfig { profile, voters, seed: 31, ..Default::default() };
    let mut e = Election::setup(&config, SetupOptions::default()).unwrap();
    for i in 0..voters {
        e.clients[i].cast(&mut e.server, i % 3).unwrap();
    }
    (e.registry_text.clone(), e.ballot_box_text(), e)
}

fn kinds(registry: &str, ballots: &str, revote: RevotePolicy) -> Vec<ViolationKind> {
    verify_eligibility(registry, ballots, revote).unwrap().violations.into_iter().map(|v| v.kind).collect()
}

#[test]
fn verifier_flags_each_violation_kind() {
    let (registry, ballots, _) = honest_board(Profile::TestSmall, 4);
    assert!(kinds(&registry, &ballots, RevotePolicy::Forbidden).is_empty());
    let lines: Vec<&str> = ballots.lines().collect();
    let fields: Vec<&str> = lines[0].split(',').collect();

    // (i) a reference outside the registry.
    let board = RegistryBoard::parse(&registry).unwrap();
    let params = board.params().clone();
    let used: BTreeSet<String> = board.records().iter().map(|r| params.element_hex(r.reference.element())).collect();
    let stranger = params
        .enumerate_subgroup()
        .unwrap()
        .into_iter()
        .map(|e| params.element_hex(&e))
        .find(|h| !used.contains(h))
        .unwrap();
    let unknown = format!("1,{},{},{},{}\n", fields[1], fields[2], stranger, fields[4]);
    assert_eq!(kinds(&registry, &unknown, RevotePolicy::Forbidden), vec![ViolationKind::UnknownReference]);

    // (iii) the same reference twice.
    let dup = format!("{ballots}5,{},{},{},{}\n", fields[1], fields[2], fields[3], fields[4]);
    assert_eq!(
        kinds(&registry, &dup, RevotePolicy::Forbidden),
        vec![ViolationKind::DuplicateReference { first_seq: 1 }]
    );
    assert!(kinds(&registry, &dup, RevotePolicy::LastCounts).is_empty());

    let gap: String = lines.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| format!("{l}\n")).collect();
    assert_eq!(kinds(&registry, &gap, RevotePolicy::Forbidden), vec![ViolationKind::SequenceGap { expected: 2 }]);

    let garbage = format!("{ballots}not,a,ballot\n");
    assert!(matches!(kinds(&registry, &garbage, RevotePolicy::Forbidden)[..], [ViolationKind::Malformed(_)]));
    assert!(verify_eligibility("# not a registry\n", &ballots, RevotePolicy::Forbidden).is_err());
}

#[test]
fn verifier_flags_bad_signatures() {
    // (ii) needs a group where a stray signature verifies with negligible probability.
    let (registry, ballots, _) = honest_board(Profile::Production, 2);
    let lines: Vec<&str> = ballots.lines().collect();
    let a: Vec<&str> = lines[0].split(',').collect();
    let b: Vec<&str> = lines[1].split(',').collect();
    let swapped = format!("1,{},{},{},{}\n", a[1], a[2], a[3], b[4]);
    assert_eq!(kinds(&registry, &swapped, RevotePolicy::Forbidden), vec![ViolationKind::BadSignature]);
    let recast = format!("1,{},{},{},{}\n", b[1], a[2], a[3], a[4]);
    assert_eq!(kinds(&registry, &recast, RevotePolicy::Forbidden), vec![ViolationKind::BadSignature]);
}

fn prod() -> &'static GroupParams {
    static P: OnceLock<GroupParams> = OnceLock::new();
    P.get_or_init(GroupParams::production)
}

#[test]
fn leak_scan_finds_injected_identifiers_and_openings() {
    let (registry, ballots, e) = honest_board(Profile::Production, 2);
    let clean = scan_privacy_leakage(prod(), &registry, &ballots, &e.voters, &[]);
    assert!(clean.is_clean());

    let leaky_box = format!("{ballots}# cast by {}\n", e.voters[0].as_str().to_uppercase());
    let found = scan_privacy_leakage(prod(), &registry, &leaky_box, &e.voters, &[]);
    assert_eq!(found.findings.len(), 1);
    assert_eq!(found.findings[0].kind, LeakKind::VoterId);
    assert_eq!(found.findings[0].artifact, "ballot-box");

    let t = prod().random_nonzero_scalar(&mut actor_rng(2, "t"));
    let x = prod().identity_scalar(e.voters[1].as_str());
    let leaky_registry = format!("{registry}# {}\n# {}\n", t.minimal_hex(), x.minimal_hex());
    let found = scan_privacy_leakage(prod(), &leaky_registry, &ballots, &e.voters, &[t]);
    let kinds: BTreeSet<LeakKind> = found.findings.iter().map(|l| l.kind).collect();
    assert_eq!(kinds, BTreeSet::from([LeakKind::Opening, LeakKind::IdentityScalar]));
    assert!(found.render().ends_with("result=leaks\n"));
}

#[test]
fn short_needles_are_reported_as_inconclusive() {
    let (registry, ballots, e) = honest_board(Profile::TestSmall, 2);
    let t = e.info.params.scalar(5u32);
    let report = scan_privacy_leakage(&e.info.params, &registry, &ballots, &e.voters, &[t]);
    assert!(report.is_clean());
    assert_eq!(report.inconclusive.len(), 3);
}

#[test]
fn passcode_provisioning_marks_delivery() {
    let config = RegistrarConfig { mode: DeliveryMode::Passcode, ..Default::default() };
    let mut r = Registrar::new(GroupParams::test_small(), config, actor_rng(3, "r"));
    let v = vids(1);
    r.generate_credentials(&v[0]).unwrap();
    r.close().unwrap();
    r.publish_registry(OrderPolicy::Sorted).unwrap();
    let (package, record) = r.provision_passcode_mode(&v[0]).unwrap();
    assert!(matches!(package, CredentialPackage::Passcode { .. }));
    assert_eq!(record.vid, v[0]);
    assert!(!r.holds_secrets_for(&v[0]));
    assert!(matches!(r.deliver_and_erase(&v[0]), Err(RegistrarError::ModeMismatch { .. })));
}
