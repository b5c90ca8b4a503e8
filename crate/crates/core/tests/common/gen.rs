use proptest::prelude::*;
use simhra::dialogue::{
    AnnotationSet, CriticalConcern, DialogueBuffer, ProcedureDecision, Utterance,
};
use simhra::scenario::{CueClass, Role, Scenario, TURN_ORDER};

fn roles_where(f: impl Fn(Role) -> bool) -> Vec<Role> {
    TURN_ORDER.into_iter().filter(|r| f(*r)).collect()
}

fn maybe_role(choices: Vec<Role>) -> BoxedStrategy<Option<Role>> {
    if choices.is_empty() {
        Just(None).boxed()
    } else {
        prop::option::weighted(0.3, prop::sample::select(choices)).boxed()
    }
}

/// Labels that respect the hierarchy direction for `role`, or none at all.
pub fn arb_labels(role: Role) -> BoxedStrategy<Option<AnnotationSet>> {
    let decision = prop_oneof![
        Just(ProcedureDecision::None),
        Just(ProcedureDecision::Correct),
        Just(ProcedureDecision::Incorrect),
    ];
    let concern = prop::option::weighted(
        0.4,
        prop_oneof![
            Just(CriticalConcern::VoicedEngaged),
            Just(CriticalConcern::VoicedDismissed),
            Just(CriticalConcern::UnvoicedWarranted),
        ],
    );
    let labels = (
        prop::bool::weighted(0.15),
        decision,
        concern,
        maybe_role(roles_where(|r| r.rank() < role.rank())),
        any::<bool>(),
        maybe_role(roles_where(|r| r.rank() > role.rank())),
    )
        .prop_map(
            |(recovery, decision, concern, pressure, reinforce, challenge)| AnnotationSet {
                recovery_identification: recovery,
                procedure_decision: decision,
                critical_concern: concern,
                directive_pressure_to: pressure,
                frame_reinforcement: reinforce,
                assertive_challenge_to: challenge,
            },
        );
    prop::option::weighted(0.8, labels).boxed()
}

/// Per round, three (text, labels) turns in authority order.
pub type RoundScript = Vec<(String, Option<AnnotationSet>)>;

pub fn arb_round(texts: &'static [&'static str]) -> impl Strategy<Value = RoundScript> {
    TURN_ORDER
        .into_iter()
        .map(|role| {
            (
                prop::sample::select(texts).prop_map(str::to_owned),
                arb_labels(role),
            )
        })
        .collect::<Vec<_>>()
}

pub fn arb_rounds(
    texts: &'static [&'static str],
    rounds: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<RoundScript>> {
    prop::collection::vec(arb_round(texts), rounds)
}

/// Transcript with one WORLD event per round followed by the scripted turns.
pub fn build_transcript(rounds: &[RoundScript]) -> DialogueBuffer {
    let mut b = DialogueBuffer::new();
    for (r, turns) in rounds.iter().enumerate() {
        let round = r as u32 + 1;
        b.append(Utterance::world("gen", round, format!("event {round}")))
            .unwrap();
        for (i, (text, labels)) in turns.iter().enumerate() {
            b.append(Utterance::agent(
                "gen",
                round,
                i as u32 + 1,
                TURN_ORDER[i],
                text.clone(),
                labels.clone(),
            ))
            .unwrap();
        }
    }
    b
}

/// Rewrites the scenario's cue classes from a list indexed by round - 1.
pub fn with_cues(mut s: Scenario, cues: &[CueClass]) -> Scenario {
    for e in &mut s.timeline {
        e.cue_class = cues
            .get(e.round as usize - 1)
            .copied()
            .unwrap_or(CueClass::Neutral);
    }
    s
}

pub fn arb_cue() -> impl Strategy<Value = CueClass> {
    prop_oneof![
        3 => Just(CueClass::Neutral),
        1 => Just(CueClass::Disconfirming),
        1 => Just(CueClass::Escalating),
    ]
}
