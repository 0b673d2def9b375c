use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use evercred_core::audit::{CheckOutcome, SecondDevice};
use evercred_core::board::verify_eligibility;
use evercred_core::client::{create_ballot, ClientError, VoterClient};
use evercred_core::crypto::{commit_identity, derive_from_passcode, unseal, Passcode, Profile, SealError, SigningKey};
use evercred_core::protocol::{
    Ballot, DeliveryMode, Protection, ReferenceOpening, RevotePolicy, VoterId, VoterSecrets,
};
use evercred_core::registrar::CredentialPackage;
use evercred_core::scenarios::{actor_rng, Election, ElectionConfig, SetupOptions};
use evercred_core::server::{
    AuthError, AuthFailure, CastError, Enrollment, RejectionReason, ServerError, ServerFaults, SharedServer,
};

fn tapped(config: &ElectionConfig, faults: ServerFaults) -> (Election, Vec<CredentialPackage>) {
    let e = Election::setup(config, SetupOptions { faults, tap_channel: true, ..Default::default() }).unwrap();
    let packages = e.registrar.channel().tapped().to_vec();
    (e, packages)
}

fn direct_secrets(packages: &[CredentialPackage]) -> Vec<VoterSecrets> {
    packages
        .iter()
        .map(|p| match p {
            CredentialPackage::Direct { secrets, .. } => secrets.clone(),
            CredentialPackage::Passcode { .. } => panic!("direct package expected"),
        })
        .collect()
}

fn production(voters: usize) -> ElectionConfig {
    ElectionConfig { profile: Profile::Production, voters, seed: 21, ..Default::default() }
}

fn login(e: &mut Election, i: usize) -> u64 {
    let creds = e.clients[i].login_credentials().unwrap();
    e.server
        .authenticate(&e.voters[i], creds.password.expose(), creds.second_factor.as_ref().map(|f| f.expose()))
        .unwrap()
}

#[test]
fn authentication_failures_look_identical() {
    let config = ElectionConfig { voters: 2, two_factor: true, ..Default::default() };
    let mut e = Election::setup(&config, SetupOptions::default()).unwrap();
    let creds = e.clients[0].login_credentials().unwrap();
    let token = creds.second_factor.as_ref().unwrap().expose().to_string();
    let pw = creds.password.expose().to_string();
    let stranger = VoterId::new("nobody").unwrap();

    let failures = [
        e.server.authenticate(&stranger, &pw, Some(&token)),
        e.server.authenticate(&e.voters[0], "wrong", Some(&token)),
        e.server.authenticate(&e.voters[0], &pw, Some("00000000")),
        e.server.authenticate(&e.voters[0], &pw, None),
    ];
    for f in &failures {
        assert_eq!(f, &Err(AuthError));
        assert_eq!(f.as_ref().unwrap_err().to_string(), "authentication failed");
    }
    let expected = BTreeMap::from([
        (AuthFailure::UnknownVoter, 1),
        (AuthFailure::BadPassword, 1),
        (AuthFailure::BadSecondFactor, 2),
    ]);
    assert_eq!(e.server.failed_attempts_by_reason(), &expected);
    assert!(e.server.authenticate(&e.voters[0], &pw, Some(&token)).is_ok());
    assert_eq!(e.server.login_count(&e.voters[0]), 1);
}

#[test]
fn second_factor_is_per_voter() {
    let config = ElectionConfig { voters: 2, two_factor: true, ..Default::default() };
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let a = e.clients[0].login_credentials().unwrap();
    let b = e.clients[1].login_credentials().unwrap();
    assert!(e
        .server
        .authenticate(&e.voters[0], a.password.expose(), Some(b.second_factor.as_ref().unwrap().expose()))
        .is_err());
    let mut client =
        VoterClient::new(e.voters[1].clone(), Arc::clone(&e.info), Protection::Augmented, actor_rng(1, "x"));
    client.load_package(packages[1].clone()).unwrap();
    client.set_enrollment(Enrollment {
        login_password: Some(b.password.clone()),
        second_factor: a.second_factor.clone(),
    });
    assert_eq!(client.cast(&mut e.server, 0).unwrap_err(), ClientError::Auth(AuthError));
    assert!(e.server.entries().is_empty());
}

#[test]
fn sessions_and_fetches_fail_cleanly() {
    let mut e = Election::setup(&ElectionConfig { voters: 2, ..Default::default() }, SetupOptions::default()).unwrap();
    let s = login(&mut e, 0);
    assert_eq!(e.server.fetch_ballot_for_audit(s).unwrap_err(), ServerError::NoBallot);
    assert_eq!(e.server.fetch_ballot_for_audit(9999).unwrap_err(), ServerError::InvalidSession);
    assert_eq!(
        e.server.retrieve_sealed_credentials(s).unwrap_err(),
        ServerError::ModeMismatch { expected: DeliveryMode::Passcode }
    );
    assert_eq!(e.server.forge_session(&e.voters[1]).unwrap_err(), ServerError::Unavailable);
    assert!(matches!(e.server.enroll_direct(&e.voters[0]), Err(ServerError::AlreadyEnrolled(_))));
}

#[test]
fn rejections_report_the_failing_check_and_leave_no_trace() {
    let config = production(3);
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let secrets = direct_secrets(&packages);
    let params = e.info.params.clone();
    let mut rng = actor_rng(3, "test");
    let (a, b) = (0usize, 1usize);

    let expect = |e: &mut Election, session, ballot: Ballot, t: Option<ReferenceOpening>, reason| {
        let before = e.server.entries().len();
        assert_eq!(e.server.validate_and_cast(session, ballot, t).unwrap_err(), CastError::Rejected(reason));
        assert_eq!(e.server.entries().len(), before);
        assert!(!e.server.holds_transient_openings());
    };

    // Cross-voting: logged in as a, credentials of b.
    let (ballot_b, _) = create_ballot(&e.info, &e.voters[b], &secrets[b], Protection::Augmented, 0, &mut rng).unwrap();
    let s = login(&mut e, a);
    expect(&mut e, s, ballot_b.clone(), Some(secrets[b].opening.clone()), RejectionReason::CommitmentMismatch);
    let s = login(&mut e, a);
    expect(&mut e, s, ballot_b, None, RejectionReason::MissingOpening);

    // Own reference, foreign signing key.
    let (mut forged, _) =
        create_ballot(&e.info, &e.voters[a], &secrets[a], Protection::Augmented, 1, &mut rng).unwrap();
    let other = SigningKey::generate(&params, &mut rng);
    forged.signature = other.sign(&params, &Ballot::signing_message(&params, &forged.ciphertext, &forged.reference));
    let s = login(&mut e, a);
    expect(&mut e, s, forged, Some(secrets[a].opening.clone()), RejectionReason::BadSignature);

    // Fresh opening: consistent with a's identity but never registered.
    let t2 = params.random_nonzero_scalar(&mut rng);
    let rho2 = commit_identity(&params, e.voters[a].as_str(), &t2);
    let (mut unknown, _) =
        create_ballot(&e.info, &e.voters[a], &secrets[a], Protection::Augmented, 1, &mut rng).unwrap();
    unknown.reference = rho2;
    unknown.signature = secrets[a]
        .signing_key
        .sign(&params, &Ballot::signing_message(&params, &unknown.ciphertext, &unknown.reference));
    let s = login(&mut e, a);
    expect(&mut e, s, unknown, Some(ReferenceOpening::new(t2)), RejectionReason::UnknownReference);

    // Valid cast, then a second one under the forbidden policy.
    let (ok, _) = create_ballot(&e.info, &e.voters[a], &secrets[a], Protection::Augmented, 2, &mut rng).unwrap();
    let s = login(&mut e, a);
    assert_eq!(e.server.validate_and_cast(s, ok, Some(secrets[a].opening.clone())).unwrap().entry.seq, 1);
    let (again, _) = create_ballot(&e.info, &e.voters[a], &secrets[a], Protection::Augmented, 0, &mut rng).unwrap();
    let s = login(&mut e, a);
    expect(&mut e, s, again, Some(secrets[a].opening.clone()), RejectionReason::RevoteForbidden);

    let (ballot, _) = create_ballot(&e.info, &e.voters[b], &secrets[b], Protection::Augmented, 0, &mut rng).unwrap();
    assert_eq!(
        e.server.validate_and_cast(424242, ballot, Some(secrets[b].opening.clone())).unwrap_err(),
        CastError::InvalidSession
    );
    assert_eq!(CastError::InvalidSession.to_string(), "request failed");
}

#[test]
fn last_counts_accepts_a_second_ballot() {
    let config = ElectionConfig { voters: 2, revote: RevotePolicy::LastCounts, ..Default::default() };
    let mut e = Election::setup(&config, SetupOptions::default()).unwrap();
    let first = e.clients[0].cast(&mut e.server, 0).unwrap();
    let second = e.clients[0].cast(&mut e.server, 1).unwrap();
    assert_eq!((first.seq, second.seq), (1, 2));
    assert_eq!(e.tally().unwrap(), vec![0, 1, 0]);
    let s = login(&mut e, 0);
    assert_eq!(e.server.fetch_ballot_for_audit(s).unwrap().0.seq, 2);
}

#[test]
fn baseline_client_is_refused_by_augmented_server() {
    let config = ElectionConfig { voters: 2, ..Default::default() };
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let creds = e.clients[0].login_credentials().unwrap();
    let mut client =
        VoterClient::new(e.voters[0].clone(), Arc::clone(&e.info), Protection::Baseline, actor_rng(1, "b"));
    client.load_package(packages[0].clone()).unwrap();
    client.set_enrollment(Enrollment { login_password: Some(creds.password), second_factor: creds.second_factor });
    assert_eq!(
        client.cast(&mut e.server, 0).unwrap_err(),
        ClientError::Cast(CastError::Rejected(RejectionReason::MissingOpening))
    );
}

#[test]
fn client_refuses_package_for_someone_else() {
    let config = ElectionConfig { voters: 2, ..Default::default() };
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let mut client =
        VoterClient::new(e.voters[0].clone(), Arc::clone(&e.info), Protection::Augmented, actor_rng(1, "c"));
    assert!(matches!(client.load_package(packages[1].clone()), Err(ClientError::WrongRecipient { .. })));
    assert_eq!(client.cast(&mut e.server, 0).unwrap_err(), ClientError::NoCredentials);
}

#[test]
fn tampered_acknowledgements_are_flagged() {
    let faults = ServerFaults { tamper_acks: true, ..Default::default() };
    let mut e = Election::setup(&production(2), SetupOptions { faults, ..Default::default() }).unwrap();
    let r = e.clients[0].cast(&mut e.server, 1).unwrap();
    assert!(!r.ack_valid);
    let report = e.audit(0, &r.payload.to_line(&e.info.params)).unwrap();
    assert_eq!(report.ack, CheckOutcome::Fail);
    assert_eq!([report.clash, report.plaintext, report.fingerprint], [CheckOutcome::Pass; 3]);
    assert!(!report.verdict());
}

fn flip_one_char(tau: &Passcode) -> Passcode {
    let mut chars: Vec<char> = tau.expose().chars().collect();
    let i = chars.iter().position(|c| *c != '-').unwrap();
    chars[i] = if chars[i] == 'A' { 'B' } else { 'A' };
    Passcode::new(chars.into_iter().collect::<String>()).unwrap()
}

#[test]
fn passcode_mode_needs_the_exact_passcode() {
    let config = ElectionConfig { voters: 3, mode: DeliveryMode::Passcode, ..Default::default() };
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let stolen = e.server.steal_database();
    for (i, package) in packages.iter().enumerate() {
        let CredentialPackage::Passcode { vid, passcode } = package else { panic!("passcode package expected") };
        let right = derive_from_passcode(passcode);
        let wrong = derive_from_passcode(&flip_one_char(passcode));
        assert!(e.server.authenticate(vid, wrong.login_password.expose(), None).is_err());
        assert_eq!(unseal(&e.info.params, &wrong.seal_key, &stolen.sealed[vid]).unwrap_err(), SealError::Integrity);
        assert!(!stolen.auth[vid].verifier.verify(wrong.login_password.expose()));
        assert!(stolen.auth[vid].verifier.verify(right.login_password.expose()));
        let s = e.server.authenticate(vid, right.login_password.expose(), None).unwrap();
        assert_eq!(e.server.retrieve_sealed_credentials(s).unwrap(), stolen.sealed[vid]);
        e.clients[i].cast(&mut e.server, i % 3).unwrap();
    }
    assert_eq!(e.server.entries().len(), 3);
}

#[test]
fn exports_are_stable_and_sequenced() {
    let mut e = Election::setup(&ElectionConfig::default(), SetupOptions::default()).unwrap();
    for i in 0..e.voters.len() {
        e.clients[i].cast(&mut e.server, i % 3).unwrap();
    }
    let first = e.server.export_ballot_box();
    assert_eq!(first, e.server.export_ballot_box());
    let seqs: Vec<u64> = first.lines().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(seqs, (1..=10).collect::<Vec<u64>>());
    assert!(verify_eligibility(&e.registry_text, &first, RevotePolicy::Forbidden).unwrap().is_clean());
}

#[test]
fn concurrent_casts_through_a_shared_server() {
    let config = ElectionConfig::default();
    let (mut e, packages) = tapped(&config, ServerFaults::default());
    let secrets = direct_secrets(&packages);
    let mut rng = actor_rng(4, "test");
    let jobs: Vec<_> = (0..e.voters.len())
        .map(|i| {
            let (ballot, _) =
                create_ballot(&e.info, &e.voters[i], &secrets[i], Protection::Augmented, i % 3, &mut rng).unwrap();
            let creds = e.clients[i].login_credentials().unwrap();
            (e.voters[i].clone(), creds.password.expose().to_string(), ballot, secrets[i].opening.clone())
        })
        .collect();
    let registry_text = e.registry_text.clone();
    let server = std::mem::replace(
        &mut e.server,
        Election::setup(&ElectionConfig { voters: 1, ..Default::default() }, SetupOptions::default()).unwrap().server,
    );
    let shared = SharedServer::new(server);
    let handles: Vec<_> = jobs
        .into_iter()
        .map(|(vid, pw, ballot, t)| {
            let shared = shared.clone();
            thread::spawn(move || {
                let session = shared.authenticate(&vid, &pw, None).unwrap();
                let seq = shared.validate_and_cast(session, ballot.clone(), Some(t)).unwrap().entry.seq;
                let (entry, _) = shared.fetch_ballot_for_audit(session).unwrap();
                assert_eq!(entry.ballot, ballot);
                seq
            })
        })
        .collect();
    let mut seqs: Vec<u64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    seqs.sort_unstable();
    assert_eq!(seqs, (1..=10).collect::<Vec<u64>>());
    let exported = shared.export_ballot_box();
    assert!(verify_eligibility(&registry_text, &exported, RevotePolicy::Forbidden).unwrap().is_clean());
    assert!(!shared.with(|s| s.holds_transient_openings()));
}

#[test]
fn second_device_reuses_the_voter_login() {
    let mut e =
        Election::setup(&ElectionConfig { voters: 2, two_factor: true, ..Default::default() }, SetupOptions::default())
            .unwrap();
    let r = e.clients[1].cast(&mut e.server, 2).unwrap();
    let line = r.payload.to_line(&e.info.params);
    let mut device = SecondDevice::new(e.voters[1].clone(), Protection::Augmented);
    let wrong = e.clients[0].login_credentials().unwrap();
    assert!(device.audit(&e.info, &line, &wrong, &mut e.server).is_err());
    let right = e.clients[1].login_credentials().unwrap();
    let report = device.audit(&e.info, &line, &right, &mut e.server).unwrap();
    assert!(report.verdict());
    assert_eq!(report.choice, Some(2));
    assert_eq!(device.reports().len(), 1);
}
