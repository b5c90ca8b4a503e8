//! The shared public dialogue record.
//!
//! Every agent utterance and every injected plant event is appended to one
//! ordered buffer. Moderator guidance never enters it: [`Speaker`] has no
//! moderator variant, so a moderator line cannot be represented here.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil;
use crate::scenario::Role;

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("out-of-order entry: R{round}.{turn} cannot follow R{last_round}.{last_turn}")]
    Ordering {
        round: u32,
        turn: u32,
        last_round: u32,
        last_turn: u32,
    },
    #[error("malformed entry: {0}")]
    Malformed(String),
    #[error("transcript record {index}: {message}")]
    Parse { index: usize, message: String },
    #[error("transcript I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Authority,
    Coordinator,
    Operator,
    #[serde(rename = "WORLD")]
    World,
}

impl Speaker {
    pub fn role(self) -> Option<Role> {
        match self {
            Speaker::Authority => Some(Role::Authority),
            Speaker::Coordinator => Some(Role::Coordinator),
            Speaker::Operator => Some(Role::Operator),
            Speaker::World => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Authority => "Authority",
            Speaker::Coordinator => "Coordinator",
            Speaker::Operator => "Operator",
            Speaker::World => "WORLD",
        }
    }
}

impl From<Role> for Speaker {
    fn from(r: Role) -> Self {
        match r {
            Role::Authority => Speaker::Authority,
            Role::Coordinator => Speaker::Coordinator,
            Role::Operator => Speaker::Operator,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureDecision {
    #[default]
    None,
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalConcern {
    VoicedEngaged,
    VoicedDismissed,
    UnvoicedWarranted,
}

impl CriticalConcern {
    pub fn is_suppressed(self) -> bool {
        matches!(
            self,
            CriticalConcern::VoicedDismissed | CriticalConcern::UnvoicedWarranted
        )
    }
}

/// Behavioural labels consumed by the rule-based moderator and extractor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    #[serde(default)]
    pub recovery_identification: bool,
    #[serde(default)]
    pub procedure_decision: ProcedureDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_concern: Option<CriticalConcern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive_pressure_to: Option<Role>,
    #[serde(default)]
    pub frame_reinforcement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertive_challenge_to: Option<Role>,
}

impl AnnotationSet {
    /// Checks the hierarchy direction of pressure and challenge labels.
    pub fn check_against(&self, speaker: Speaker) -> Result<(), DialogueError> {
        let Some(role) = speaker.role() else {
            if *self != AnnotationSet::default() {
                return Err(DialogueError::Malformed(
                    "WORLD entries cannot carry behavioural annotations".into(),
                ));
            }
            return Ok(());
        };
        if let Some(to) = self.directive_pressure_to {
            if to.rank() >= role.rank() {
                return Err(DialogueError::Malformed(format!(
                    "{role} cannot apply directive pressure to {to}"
                )));
            }
        }
        if let Some(to) = self.assertive_challenge_to {
            if to.rank() <= role.rank() {
                return Err(DialogueError::Malformed(format!(
                    "{role} cannot assertively challenge {to}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub run_id: String,
    pub round: u32,
    /// 1-based agent position in the round; WORLD entries use 0 and sort
    /// ahead of the round's agent turns.
    pub turn_index: u32,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationSet>,
}

impl Utterance {
    pub fn world(run_id: &str, round: u32, text: impl Into<String>) -> Self {
        Self {
            run_id: run_id.to_owned(),
            round,
            turn_index: 0,
            speaker: Speaker::World,
            text: text.into(),
            annotations: None,
        }
    }

    pub fn agent(
        run_id: &str,
        round: u32,
        turn_index: u32,
        role: Role,
        text: impl Into<String>,
        annotations: Option<AnnotationSet>,
    ) -> Self {
        Self {
            run_id: run_id.to_owned(),
            round,
            turn_index,
            speaker: role.into(),
            text: text.into(),
            annotations,
        }
    }

    pub fn is_agent(&self) -> bool {
        self.speaker != Speaker::World
    }

    /// Annotations, or the all-default set when the entry carries none.
    pub fn labels(&self) -> AnnotationSet {
        self.annotations.clone().unwrap_or_default()
    }

    fn validate(&self) -> Result<(), DialogueError> {
        if self.round == 0 {
            return Err(DialogueError::Malformed("round must be positive".into()));
        }
        match (self.speaker, self.turn_index) {
            (Speaker::World, 0) => {}
            (Speaker::World, t) => {
                return Err(DialogueError::Malformed(format!(
                    "WORLD entries use turn_index 0, got {t}"
                )))
            }
            (_, 0) => {
                return Err(DialogueError::Malformed(
                    "agent turn_index must be positive".into(),
                ))
            }
            _ => {}
        }
        if let Some(a) = &self.annotations {
            a.check_against(self.speaker)?;
        }
        Ok(())
    }
}

/// Append-only ordered record of one run's public dialogue.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialogueBuffer {
    entries: Vec<Utterance>,
    current_round: u32,
}

impl DialogueBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Utterance] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn current_round(&self) -> u32 {
        self.current_round
    }

    pub fn agent_turns(&self) -> impl Iterator<Item = &Utterance> {
        self.entries.iter().filter(|u| u.is_agent())
    }

    pub fn round_entries(&self, round: u32) -> impl Iterator<Item = &Utterance> {
        self.entries.iter().filter(move |u| u.round == round)
    }

    /// Appends `u`, rejecting anything that would break buffer ordering.
    ///
    /// Keys `(round, turn_index)` must strictly increase, except that several
    /// WORLD entries may share a round's slot 0.
    pub fn append(&mut self, u: Utterance) -> Result<(), DialogueError> {
        u.validate()?;
        if let Some(last) = self.entries.last() {
            let key = (u.round, u.turn_index);
            let last_key = (last.round, last.turn_index);
            let world_pair = u.speaker == Speaker::World && last.speaker == Speaker::World;
            let ok = key > last_key || (world_pair && key == last_key);
            if !ok || u.round < self.current_round {
                return Err(DialogueError::Ordering {
                    round: u.round,
                    turn: u.turn_index,
                    last_round: last.round,
                    last_turn: last.turn_index,
                });
            }
        }
        self.current_round = u.round;
        self.entries.push(u);
        Ok(())
    }

    /// Linearises the buffer as one `R{round}.{turn} [{speaker}]: {text}` line
    /// per entry. Line breaks inside a text are folded to spaces.
    pub fn render_context(&self) -> String {
        let mut out = String::new();
        for u in &self.entries {
            let text: String = u
                .text
                .chars()
                .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
                .collect();
            out.push_str(&format!(
                "R{}.{} [{}]: {}\n",
                u.round, u.turn_index, u.speaker, text
            ));
        }
        out
    }

    /// Serialises the buffer as line-delimited JSON.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.entries {
            out.push_str(&serde_json::to_string(u).expect("utterance serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses line-delimited JSON, re-checking every ordering invariant.
    /// Blank lines are skipped; record indices in errors are 1-based lines.
    pub fn from_jsonl(text: &str) -> Result<Self, DialogueError> {
        let mut buf = DialogueBuffer::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let index = i + 1;
            let u: Utterance = serde_json::from_str(line).map_err(|e| DialogueError::Parse {
                index,
                message: e.to_string(),
            })?;
            buf.append(u).map_err(|e| DialogueError::Parse {
                index,
                message: e.to_string(),
            })?;
        }
        Ok(buf)
    }
}

pub fn save_transcript(buffer: &DialogueBuffer, path: &Path) -> Result<(), DialogueError> {
    fsutil::write_atomic(path, buffer.to_jsonl().as_bytes())?;
    Ok(())
}

pub fn load_transcript(path: &Path) -> Result<DialogueBuffer, DialogueError> {
    DialogueBuffer::from_jsonl(&fs::read_to_string(path)?)
}
