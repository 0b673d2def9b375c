use evercred_core::crypto::Profile;
use evercred_core::protocol::{DeliveryMode, Protection, RevotePolicy};
use evercred_core::registrar::OrderPolicy;
use evercred_core::scenarios::{
    attempt_stuffing, run, run_everlasting_privacy_demo, run_honest_election, ElectionConfig, ScenarioKind,
    ScenarioReport, ScenarioSpec, StuffingCell,
};

fn fact<'a>(r: &'a ScenarioReport, key: &str) -> &'a str {
    r.facts.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).unwrap_or_else(|| panic!("no fact {key}"))
}

fn run_kind(kind: ScenarioKind, config: &ElectionConfig) -> ScenarioReport {
    run(kind, config, &ScenarioSpec::default()).unwrap()
}

#[test]
fn every_scenario_holds_and_reruns_byte_identically() {
    for kind in ScenarioKind::ALL {
        for seed in [1, 7, 1234] {
            let config = ElectionConfig { seed, ..Default::default() };
            let a = run_kind(kind, &config);
            let b = run_kind(kind, &config);
            assert!(a.all_hold(), "{}", a.render());
            assert_eq!(a.render(), b.render());
            assert_eq!(a.artifacts, b.artifacts);
        }
    }
}

#[test]
fn seeds_change_the_election() {
    let a = run_honest_election(&ElectionConfig { seed: 1, ..Default::default() }).unwrap();
    let b = run_honest_election(&ElectionConfig { seed: 2, ..Default::default() }).unwrap();
    assert_ne!(a.artifacts["ballots.txt"], b.artifacts["ballots.txt"]);
    assert_ne!(a.artifacts["registry.txt"], b.artifacts["registry.txt"]);
}

#[test]
fn honest_elections_hold_across_seeds() {
    for seed in 1..=25 {
        for mode in [DeliveryMode::Direct, DeliveryMode::Passcode] {
            let r = run_honest_election(&ElectionConfig { seed, mode, ..Default::default() }).unwrap();
            assert!(r.all_hold(), "{}", r.render());
        }
    }
}

#[test]
fn delivery_modes_yield_the_same_outcome() {
    let direct = run_honest_election(&ElectionConfig::default()).unwrap();
    let passcode = run_honest_election(&ElectionConfig { mode: DeliveryMode::Passcode, ..Default::default() }).unwrap();
    for key in ["tally", "expected_tally", "audits_passed", "board_violations", "casts_accepted"] {
        assert_eq!(fact(&direct, key), fact(&passcode, key), "{key}");
    }
    assert_eq!(fact(&direct, "audits_passed"), "10");
    assert_eq!(fact(&direct, "board_violations"), "0");
}

#[test]
fn honest_election_variants_hold() {
    let variants = [
        ElectionConfig { two_factor: true, mode: DeliveryMode::Passcode, ..Default::default() },
        ElectionConfig { revote: RevotePolicy::LastCounts, ..Default::default() },
        ElectionConfig { revote: RevotePolicy::LastCounts, mode: DeliveryMode::Passcode, ..Default::default() },
        ElectionConfig { protection: Protection::Baseline, ..Default::default() },
        ElectionConfig { order: OrderPolicy::Shuffled { seed: 42 }, ..Default::default() },
        ElectionConfig { choices: 5, voters: 7, ..Default::default() },
        ElectionConfig { voters: 1, ..Default::default() },
    ];
    for config in variants {
        let r = run_honest_election(&config).unwrap();
        assert!(r.all_hold(), "{config:?}\n{}", r.render());
    }
    let recast =
        run_honest_election(&ElectionConfig { revote: RevotePolicy::LastCounts, ..Default::default() }).unwrap();
    assert_eq!(fact(&recast, "recasts"), "5");
}

#[test]
fn invalid_configurations_are_errors() {
    for kind in [ScenarioKind::Honest, ScenarioKind::CrossVoting, ScenarioKind::Privacy, ScenarioKind::Clash] {
        let err = run(kind, &ElectionConfig { voters: 0, ..Default::default() }, &ScenarioSpec::default());
        assert!(err.is_err(), "{kind:?}");
    }
    assert!(run(ScenarioKind::Clash, &ElectionConfig { voters: 1, ..Default::default() }, &ScenarioSpec::default())
        .is_err());
    assert!(run_honest_election(&ElectionConfig { voters: 11, ..Default::default() }).is_err());
    assert!(run_honest_election(&ElectionConfig { choices: 0, ..Default::default() }).is_err());
    let production = ElectionConfig { profile: Profile::Production, voters: 2, ..Default::default() };
    assert!(run_everlasting_privacy_demo(&production).is_err());
}

#[test]
fn stuffing_cells_match_their_expected_outcomes() {
    let config = ElectionConfig::default();
    for cell in StuffingCell::default_matrix() {
        let outcome = attempt_stuffing(&config, &cell).unwrap();
        assert_eq!(Some(outcome.success), cell.expect, "{cell:?} blocked at {}", outcome.blocked_at);
        assert_eq!(outcome.success, outcome.blocked_at == "none");
    }
}

#[test]
fn stuffing_is_blocked_at_the_expected_step() {
    let config = ElectionConfig::default();
    let blocked_at = |mode, two_factor, registrar, server| {
        let cell = StuffingCell {
            mode,
            two_factor,
            compromise: evercred_core::scenarios::Compromise { registrar, server },
            expect: None,
        };
        attempt_stuffing(&config, &cell).unwrap().blocked_at
    };
    assert_eq!(blocked_at(DeliveryMode::Direct, false, true, false), "authenticate");
    assert_eq!(blocked_at(DeliveryMode::Passcode, true, true, false), "authenticate");
    assert_eq!(blocked_at(DeliveryMode::Direct, true, false, true), "credentials");
    assert_eq!(blocked_at(DeliveryMode::Passcode, false, false, true), "unseal");
}

#[test]
fn attacks_are_detected_only_with_commitments() {
    let clash = run_kind(ScenarioKind::Clash, &ElectionConfig::default());
    for order in ["owner-first", "victim-first"] {
        assert_eq!(fact(&clash, &format!("augmented.{order}.detected")), "true");
        assert_eq!(fact(&clash, &format!("baseline.{order}.detected")), "false");
    }
    let cross = run_kind(ScenarioKind::CrossVoting, &ElectionConfig::default());
    assert_eq!(fact(&cross, "pairs"), "90");
    assert_eq!(fact(&cross, "augmented.rejected_commitment_mismatch"), "90");
    assert_eq!(fact(&cross, "baseline.accepted"), "90");
}

#[test]
fn privacy_demo_exhausts_the_toy_group() {
    let r = run_everlasting_privacy_demo(&ElectionConfig::default()).unwrap();
    assert!(r.all_hold(), "{}", r.render());
    assert_eq!(fact(&r, "valid_openings"), "10");
    assert_eq!(fact(&r, "table.commitment_values"), "11");
}

#[test]
fn scenario_names_round_trip() {
    for kind in ScenarioKind::ALL {
        assert_eq!(kind.as_str().parse::<ScenarioKind>().unwrap(), kind);
    }
    assert!("nonsense".parse::<ScenarioKind>().is_err());
}

#[test]
fn reports_render_in_a_fixed_layout() {
    let r = run_everlasting_privacy_demo(&ElectionConfig::default()).unwrap();
    let text = r.render();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario=privacy");
    assert_eq!(lines[1], "profile=test-small");
    assert_eq!(lines[2], "seed=1");
    assert_eq!(*lines.last().unwrap(), "result=PASS");
    let first_assert = lines.iter().position(|l| l.starts_with("assert.")).unwrap();
    assert!(lines[first_assert..lines.len() - 1]
        .iter()
        .all(|l| l.starts_with("assert.") && (l.ends_with("=PASS") || l.ends_with("=FAIL"))));
}
