//! Deterministic replay backend.
//!
//! A script is a TOML document with one `[[turn]]` per (role, round), each
//! carrying the exact text to emit and optional inline annotations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentBackend, AgentTurn, BackendError, TurnRequest};
use crate::dialogue::AnnotationSet;
use crate::scenario::Role;

const TMI_1979: &str = include_str!("../../assets/scripts/tmi1979.toml");
const CHERNOBYL_1986: &str = include_str!("../../assets/scripts/chernobyl1986.toml");

pub fn builtin_script_source(id: &str) -> Option<&'static str> {
    match id {
        "tmi1979" => Some(TMI_1979),
        "chernobyl1986" => Some(CHERNOBYL_1986),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub round: u32,
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationSet>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDoc {
    scenario_id: String,
    #[serde(default)]
    turn: Vec<ScriptEntry>,
}

#[derive(Debug, Clone)]
pub struct ScriptBook {
    scenario_id: String,
    entries: BTreeMap<(u32, Role), ScriptEntry>,
}

impl ScriptBook {
    pub fn from_toml_str(text: &str) -> Result<Self, BackendError> {
        let doc: ScriptDoc =
            toml::from_str(text).map_err(|e| BackendError::Config(format!("script: {e}")))?;
        let mut entries = BTreeMap::new();
        for e in doc.turn {
            if e.round == 0 {
                return Err(BackendError::Config(
                    "script: round must be positive".into(),
                ));
            }
            if e.text.trim().is_empty() {
                return Err(BackendError::Config(format!(
                    "script: empty text for {} in round {}",
                    e.role, e.round
                )));
            }
            if let Some(a) = &e.annotations {
                a.check_against(e.role.into())
                    .map_err(|err| BackendError::Config(format!("script: {err}")))?;
            }
            let key = (e.round, e.role);
            if entries.insert(key, e).is_some() {
                return Err(BackendError::Config(format!(
                    "script: duplicate entry for {} in round {}",
                    key.1, key.0
                )));
            }
        }
        Ok(Self {
            scenario_id: doc.scenario_id,
            entries,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("cannot read script {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn builtin(id: &str) -> Result<Self, BackendError> {
        let text = builtin_script_source(id)
            .ok_or_else(|| BackendError::Config(format!("no builtin script `{id}`")))?;
        Self::from_toml_str(text)
    }

    pub fn scenario_id(&self) -> &str {
        &self.scenario_id
    }

    pub fn entry(&self, round: u32, role: Role) -> Option<&ScriptEntry> {
        self.entries.get(&(round, role))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest round with at least one entry.
    pub fn last_round(&self) -> u32 {
        self.entries.keys().map(|(r, _)| *r).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    book: ScriptBook,
}

impl ScriptedBackend {
    pub fn new(book: ScriptBook) -> Self {
        Self { book }
    }

    pub fn book(&self) -> &ScriptBook {
        &self.book
    }
}

impl AgentBackend for ScriptedBackend {
    fn generate_turn(&self, req: &TurnRequest<'_>) -> Result<AgentTurn, BackendError> {
        if req.scenario_id != self.book.scenario_id {
            return Err(BackendError::Config(format!(
                "script is for scenario `{}`, run is `{}`",
                self.book.scenario_id, req.scenario_id
            )));
        }
        let role = req.role.role_name;
        let entry = self.book.entry(req.round, role).ok_or_else(|| {
            BackendError::Config(format!(
                "script has no entry for {role} in round {}",
                req.round
            ))
        })?;
        Ok(AgentTurn {
            text: entry.text.clone(),
            annotations: entry.annotations.clone(),
        })
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}
