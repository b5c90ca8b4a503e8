//! End-of-round behavioural supervision.
//!
//! The moderator checks each agent utterance of a finished round for three
//! kinds of drift and answers each finding with a hidden note that reaches
//! only the offending agent, and only in the next round. Rule mode works
//! from annotations and the scenario's drift parameters; LLM mode asks an
//! evaluation model for the same findings.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatClient, ChatMessage, DecodingParams};
use crate::dialogue::{DialogueBuffer, Utterance};
use crate::scenario::{Role, Scenario};

const LLM_PROMPT: &str = include_str!("../assets/prompts/moderator_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DriftType {
    PrematureEscalation,
    RationalOverride,
    AuthorityInversion,
}

impl DriftType {
    pub const ALL: [DriftType; 3] = [
        DriftType::PrematureEscalation,
        DriftType::RationalOverride,
        DriftType::AuthorityInversion,
    ];

    /// The evaluation criterion this drift type violates.
    pub fn criterion(self) -> Criterion {
        match self {
            DriftType::PrematureEscalation => Criterion::StageAppropriateness,
            DriftType::RationalOverride => Criterion::HistoricalPlausibility,
            DriftType::AuthorityInversion => Criterion::RoleConsistency,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DriftType::PrematureEscalation => "Premature escalation",
            DriftType::RationalOverride => "Rational override",
            DriftType::AuthorityInversion => "Authority inversion",
        }
    }
}

impl fmt::Display for DriftType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    RoleConsistency,
    HistoricalPlausibility,
    StageAppropriateness,
}

/// Position of the utterance that triggered a finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub round: u32,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftFinding {
    pub run_id: String,
    pub round: u32,
    pub agent: Role,
    pub drift_type: DriftType,
    pub evidence: EvidenceRef,
    pub criterion: Criterion,
}

impl DriftFinding {
    fn from_utterance(u: &Utterance, agent: Role, drift_type: DriftType) -> Self {
        Self {
            run_id: u.run_id.clone(),
            round: u.round,
            agent,
            drift_type,
            evidence: EvidenceRef {
                round: u.round,
                turn_index: u.turn_index,
            },
            criterion: drift_type.criterion(),
        }
    }
}

/// Hidden corrective guidance. Persisted only in the `.moderator` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeratorNote {
    pub target_agent: Role,
    pub round_issued: u32,
    pub round_applies: u32,
    pub drift_type: DriftType,
    pub text: String,
}

/// Corrective-note wording per drift type. `{person}` and `{frame}` are
/// substituted from the scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteTemplates {
    pub premature_escalation: String,
    pub rational_override: String,
    pub authority_inversion: String,
}

impl Default for NoteTemplates {
    fn default() -> Self {
        Self {
            premature_escalation: "{person}, at this point in the event nobody on the crew had \
                grounds to be confident about a recovery path. Stay with what the indications in \
                front of you would realistically support at this stage."
                .into(),
            rational_override: "{person}, keep reasoning from the crew's working interpretation: \
                {frame} Do not abandon it on the strength of hindsight."
                .into(),
            authority_inversion: "{person}, in this crew nobody openly challenged a superior. \
                Raise doubts, if at all, through deference and then comply."
                .into(),
        }
    }
}

impl NoteTemplates {
    fn template(&self, d: DriftType) -> &str {
        match d {
            DriftType::PrematureEscalation => &self.premature_escalation,
            DriftType::RationalOverride => &self.rational_override,
            DriftType::AuthorityInversion => &self.authority_inversion,
        }
    }

    pub fn render(&self, d: DriftType, scenario: &Scenario, target: Role) -> String {
        let person = scenario
            .role(target)
            .map(|r| r.historical_person.as_str())
            .unwrap_or(target.as_str());
        self.template(d)
            .replace("{person}", person)
            .replace("{frame}", &scenario.drift.locked_frame_description)
    }
}

/// Rule-based drift detection over the agent turns of `round`.
///
/// * premature escalation: a recovery identification before the earliest
///   plausible recovery round;
/// * rational override: a non-reinforcing utterance containing one of the
///   scenario's frame-abandonment phrases before the frame release round;
/// * authority inversion: an assertive challenge to a superior when the
///   scenario's hierarchy is strict.
pub fn evaluate_round(
    scenario: &Scenario,
    buffer: &DialogueBuffer,
    round: u32,
) -> Vec<DriftFinding> {
    let drift = &scenario.drift;
    let keywords: Vec<String> = drift
        .frame_abandon_keywords
        .iter()
        .map(|k| k.to_lowercase())
        .collect();
    let mut findings = Vec::new();
    for u in buffer.round_entries(round) {
        let Some(agent) = u.speaker.role() else {
            continue;
        };
        let labels = u.labels();
        if labels.recovery_identification && round < drift.earliest_plausible_recovery_round {
            findings.push(DriftFinding::from_utterance(
                u,
                agent,
                DriftType::PrematureEscalation,
            ));
        }
        if round < drift.frame_release_round && !labels.frame_reinforcement {
            let text = u.text.to_lowercase();
            if keywords
                .iter()
                .any(|k| !k.is_empty() && text.contains(k.as_str()))
            {
                findings.push(DriftFinding::from_utterance(
                    u,
                    agent,
                    DriftType::RationalOverride,
                ));
            }
        }
        if drift.strict_hierarchy {
            if let Some(target) = labels.assertive_challenge_to {
                if target.rank() > agent.rank() {
                    findings.push(DriftFinding::from_utterance(
                        u,
                        agent,
                        DriftType::AuthorityInversion,
                    ));
                }
            }
        }
    }
    findings
}

/// One note per finding, delivered to the finding's agent in the following
/// round. Findings in the final round produce nothing.
pub fn issue_notes(
    findings: &[DriftFinding],
    scenario: &Scenario,
    templates: &NoteTemplates,
) -> Vec<ModeratorNote> {
    let last = scenario.temporal.total_rounds;
    findings
        .iter()
        .filter(|f| f.round < last)
        .map(|f| ModeratorNote {
            target_agent: f.agent,
            round_issued: f.round,
            round_applies: f.round + 1,
            drift_type: f.drift_type,
            text: templates.render(f.drift_type, scenario, f.agent),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub enum ModeratorMode {
    Rules,
    /// Ask an evaluation model; runs at the evaluation temperature.
    Llm(Arc<ChatClient>),
}

#[derive(Debug, Clone)]
pub struct Moderator {
    pub mode: ModeratorMode,
    pub templates: NoteTemplates,
}

impl Default for Moderator {
    fn default() -> Self {
        Self {
            mode: ModeratorMode::Rules,
            templates: NoteTemplates::default(),
        }
    }
}

impl Moderator {
    pub fn rules(templates: NoteTemplates) -> Self {
        Self {
            mode: ModeratorMode::Rules,
            templates,
        }
    }

    /// Evaluates `round` and returns the notes to deliver next round.
    pub fn moderate(
        &self,
        scenario: &Scenario,
        buffer: &DialogueBuffer,
        round: u32,
    ) -> Result<(Vec<DriftFinding>, Vec<ModeratorNote>), BackendError> {
        let findings = match &self.mode {
            ModeratorMode::Rules => evaluate_round(scenario, buffer, round),
            ModeratorMode::Llm(client) => evaluate_round_llm(client, scenario, buffer, round)?,
        };
        let notes = issue_notes(&findings, scenario, &self.templates);
        Ok((findings, notes))
    }
}

fn evaluate_round_llm(
    client: &ChatClient,
    scenario: &Scenario,
    buffer: &DialogueBuffer,
    round: u32,
) -> Result<Vec<DriftFinding>, BackendError> {
    let round_log: String = buffer
        .round_entries(round)
        .map(|u| {
            format!(
                "R{}.{} [{}]: {}\n",
                u.round, u.turn_index, u.speaker, u.text
            )
        })
        .collect();
    let minutes = f64::from(round) * scenario.temporal.minutes_per_round;
    let prompt = LLM_PROMPT
        .replace("{scenario_id}", &scenario.scenario_id)
        .replace("{round}", &round.to_string())
        .replace(
            "{total_rounds}",
            &scenario.temporal.total_rounds.to_string(),
        )
        .replace("{minutes}", &format!("{minutes}"))
        .replace(
            "{earliest_recovery_round}",
            &scenario.drift.earliest_plausible_recovery_round.to_string(),
        )
        .replace("{frame}", &scenario.drift.locked_frame_description)
        .replace(
            "{frame_release_round}",
            &scenario.drift.frame_release_round.to_string(),
        )
        .replace(
            "{hierarchy}",
            if scenario.drift.strict_hierarchy {
                "strict: open challenges to a superior are historically implausible"
            } else {
                "moderate: subordinates could question superiors"
            },
        )
        .replace("{round_log}", &round_log);
    let messages = [ChatMessage::user(prompt)];
    let eval = DecodingParams::evaluation();
    let reply = client.complete(&messages, eval.temperature, eval.max_tokens_per_turn, None)?;
    match parse_llm_findings(&reply, buffer, round) {
        Ok(f) => Ok(f),
        Err(e) => {
            log::warn!("moderator reply for round {round} ignored: {e}");
            Ok(Vec::new())
        }
    }
}

#[derive(Deserialize)]
struct LlmFindings {
    findings: Vec<LlmFinding>,
}

#[derive(Deserialize)]
struct LlmFinding {
    turn_index: u32,
    drift_type: DriftType,
}

/// Parses an evaluation model's reply into findings for `round`.
///
/// Findings that point at a turn missing from the round are dropped, so
/// every returned finding references an utterance present in the buffer.
pub fn parse_llm_findings(
    reply: &str,
    buffer: &DialogueBuffer,
    round: u32,
) -> Result<Vec<DriftFinding>, String> {
    let body = crate::report::strip_code_fence(reply);
    let parsed: LlmFindings =
        serde_json::from_str(body).map_err(|e| format!("invalid findings document: {e}"))?;
    let mut out = Vec::new();
    for f in parsed.findings {
        let Some(u) = buffer
            .round_entries(round)
            .find(|u| u.turn_index == f.turn_index && u.is_agent())
        else {
            continue;
        };
        let agent = u.speaker.role().expect("agent entry");
        let finding = DriftFinding::from_utterance(u, agent, f.drift_type);
        if !out.contains(&finding) {
            out.push(finding);
        }
    }
    Ok(out)
}

pub fn note_log_to_jsonl(notes: &[ModeratorNote]) -> String {
    let mut out = String::new();
    for n in notes {
        out.push_str(&serde_json::to_string(n).expect("note serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
pub enum NoteLogError {
    #[error("note log record {index}: {message}")]
    Parse { index: usize, message: String },
    #[error("note log I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_note_log(text: &str) -> Result<Vec<ModeratorNote>, NoteLogError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let note: ModeratorNote = serde_json::from_str(line).map_err(|e| NoteLogError::Parse {
            index: i + 1,
            message: e.to_string(),
        })?;
        if note.round_applies != note.round_issued.saturating_add(1) {
            return Err(NoteLogError::Parse {
                index: i + 1,
                message: "round_applies must be round_issued + 1".into(),
            });
        }
        out.push(note);
    }
    Ok(out)
}

pub fn load_note_log(path: &std::path::Path) -> Result<Vec<ModeratorNote>, NoteLogError> {
    parse_note_log(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTypeStats {
    pub drift_type: DriftType,
    pub intervention_count: u64,
    pub denominator: u64,
    pub rate: f64,
    /// `[min, max]` round of issue; absent when the type never fired.
    pub primary_round_range: Option<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionStats {
    pub scenario_id: String,
    pub total_agent_turns: u64,
    pub per_type: Vec<DriftTypeStats>,
}

impl InterventionStats {
    pub fn get(&self, d: DriftType) -> &DriftTypeStats {
        self.per_type
            .iter()
            .find(|s| s.drift_type == d)
            .expect("every drift type is present")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InterventionError {
    #[error("intervention rate is undefined for zero agent turns")]
    ZeroDenominator,
    #[error("{notes} notes exceed {turns} agent turns")]
    TooManyNotes { notes: u64, turns: u64 },
}

/// Per-turn intervention rates: count of notes of each drift type over the
/// total agent turns across the runs the notes came from.
pub fn intervention_stats(
    scenario_id: &str,
    notes: &[ModeratorNote],
    total_agent_turns: u64,
) -> Result<InterventionStats, InterventionError> {
    if total_agent_turns == 0 {
        return Err(InterventionError::ZeroDenominator);
    }
    if notes.len() as u64 > total_agent_turns {
        return Err(InterventionError::TooManyNotes {
            notes: notes.len() as u64,
            turns: total_agent_turns,
        });
    }
    let mut by_type: BTreeMap<DriftType, (u64, Option<[u32; 2]>)> = BTreeMap::new();
    for n in notes {
        let e = by_type.entry(n.drift_type).or_insert((0, None));
        e.0 += 1;
        e.1 = Some(match e.1 {
            None => [n.round_issued, n.round_issued],
            Some([lo, hi]) => [lo.min(n.round_issued), hi.max(n.round_issued)],
        });
    }
    let per_type = DriftType::ALL
        .iter()
        .map(|&d| {
            let (count, range) = by_type.get(&d).copied().unwrap_or((0, None));
            DriftTypeStats {
                drift_type: d,
                intervention_count: count,
                denominator: total_agent_turns,
                rate: count as f64 / total_agent_turns as f64,
                primary_round_range: range,
            }
        })
        .collect();
    Ok(InterventionStats {
        scenario_id: scenario_id.to_owned(),
        total_agent_turns,
        per_type,
    })
}
