use std::path::PathBuf;

use simhra::dialogue::load_transcript;
use simhra::moderator::{evaluate_round, issue_notes, DriftType, NoteTemplates};
use simhra::report::{extract_metrics_rules, Ddt};
use simhra::scenario::{load_scenario, Role};

#[test]
fn early_recovery_in_drift_fixture() {
    let s = load_scenario("tmi1979").unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tmi1979_drift.jsonl");
    let t = load_transcript(&path).unwrap();

    let findings = evaluate_round(&s, &t, 5);
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].drift_type, DriftType::PrematureEscalation);
    assert_eq!(findings[0].agent, Role::Operator);
    assert_eq!(
        (findings[0].evidence.round, findings[0].evidence.turn_index),
        (5, 3)
    );

    let notes = issue_notes(&findings, &s, &NoteTemplates::default());
    assert_eq!(notes.len(), 1);
    assert_eq!(
        (notes[0].target_agent, notes[0].round_applies),
        (Role::Operator, 6)
    );
    assert!(notes[0].text.contains("Kunder"));

    // The early recovery also moves DDT: (4 + 3/3) x 10.
    assert_eq!(extract_metrics_rules(&t, &s).ddt, Ddt::Minutes(50.0));
}
