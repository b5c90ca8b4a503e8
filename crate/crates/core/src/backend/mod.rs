//! Turn generation behind one contract, with a live LLM backend and a
//! deterministic scripted backend.

pub mod chat;
pub mod prompt;
pub mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::AnnotationSet;
use crate::scenario::RoleSpec;

pub use chat::{ChatClient, ChatMessage, RetryPolicy};
pub use prompt::assemble_prompt;
pub use scripted::{ScriptBook, ScriptedBackend};

pub const API_KEY_ENV: &str = "SIMHRA_API_KEY";
pub const API_BASE_ENV: &str = "SIMHRA_API_BASE";

#[derive(Debug, Error)]
pub enum BackendError {
    /// The endpoint could not be reached or kept failing; the run is an
    /// infrastructure failure.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens_per_turn: u32,
}

impl DecodingParams {
    pub const ROLE_PLAY_TEMPERATURE: f64 = 0.7;
    pub const EVALUATION_TEMPERATURE: f64 = 0.2;
    pub const MAX_TOKENS_PER_TURN: u32 = 800;

    pub fn role_play() -> Self {
        Self {
            temperature: Self::ROLE_PLAY_TEMPERATURE,
            max_tokens_per_turn: Self::MAX_TOKENS_PER_TURN,
        }
    }

    /// Settings for the moderator and report stages.
    pub fn evaluation() -> Self {
        Self {
            temperature: Self::EVALUATION_TEMPERATURE,
            max_tokens_per_turn: Self::MAX_TOKENS_PER_TURN,
        }
    }
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self::role_play()
    }
}

/// Everything an agent sees when it takes its turn.
#[derive(Debug, Clone)]
pub struct TurnRequest<'a> {
    pub scenario_id: &'a str,
    pub role: &'a RoleSpec,
    pub history_rendering: String,
    /// Notes addressed to this agent for this round only.
    pub hidden_guidance: Vec<String>,
    pub round: u32,
    pub total_rounds: u32,
    pub minutes_per_round: f64,
    pub decoding: DecodingParams,
    pub seed: Option<u64>,
}

/// Raw output of one turn before the engine stamps run, round and position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentTurn {
    pub text: String,
    pub annotations: Option<AnnotationSet>,
}

pub trait AgentBackend: Send + Sync {
    fn generate_turn(&self, req: &TurnRequest<'_>) -> Result<AgentTurn, BackendError>;

    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    Scripted,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Llm => "llm",
            BackendKind::Scripted => "scripted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_base: Option<String>,
    #[serde(default = "default_key_env")]
    pub api_key_source: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_id: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Forward the run seed as a request parameter (only for endpoints that honour it).
    #[serde(default)]
    pub send_seed: bool,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

fn default_key_env() -> String {
    API_KEY_ENV.to_owned()
}

fn default_in_flight() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    1000
}

impl BackendConfig {
    pub fn scripted_builtin(id: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            endpoint_base: None,
            api_key_source: default_key_env(),
            model_name: String::new(),
            script_path: None,
            script_id: Some(id.into()),
            max_in_flight: default_in_flight(),
            send_seed: false,
            initial_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn scripted_file(path: impl Into<PathBuf>) -> Self {
        Self {
            script_path: Some(path.into()),
            script_id: None,
            ..Self::scripted_builtin("")
        }
    }

    pub fn llm(endpoint_base: Option<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Llm,
            endpoint_base,
            model_name: model_name.into(),
            script_id: None,
            ..Self::scripted_builtin("")
        }
    }

    /// Endpoint from the config, falling back to `SIMHRA_API_BASE`.
    pub fn resolved_endpoint(&self) -> Option<String> {
        self.endpoint_base
            .clone()
            .or_else(|| std::env::var(API_BASE_ENV).ok())
            .filter(|s| !s.trim().is_empty())
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Llm => {
                if self.resolved_endpoint().is_none() {
                    return Err(BackendError::Config(format!(
                        "llm backend needs an endpoint base (config or {API_BASE_ENV})"
                    )));
                }
                if self.model_name.trim().is_empty() {
                    return Err(BackendError::Config(
                        "llm backend needs a model name".into(),
                    ));
                }
            }
            BackendKind::Scripted => {
                let has_id = self.script_id.as_deref().is_some_and(|s| !s.is_empty());
                if self.script_path.is_none() && !has_id {
                    return Err(BackendError::Config(
                        "scripted backend needs a script path or builtin script id".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds the shared chat client for an llm config.
    pub fn chat_client(&self) -> Result<ChatClient, BackendError> {
        self.validate()?;
        let endpoint = self
            .resolved_endpoint()
            .ok_or_else(|| BackendError::Config("llm backend needs an endpoint base".into()))?;
        let key = std::env::var(&self.api_key_source).map_err(|_| {
            BackendError::Config(format!(
                "environment variable {} is not set",
                self.api_key_source
            ))
        })?;
        ChatClient::builder(endpoint, &self.model_name)
            .api_key(key)
            .max_in_flight(self.max_in_flight)
            .send_seed(self.send_seed)
            .retry(RetryPolicy {
                max_attempts: 3,
                initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            })
            .build()
    }

    pub fn build(&self) -> Result<Arc<dyn AgentBackend>, BackendError> {
        self.validate()?;
        match self.kind {
            BackendKind::Scripted => {
                let book = match (&self.script_path, &self.script_id) {
                    (Some(p), _) => ScriptBook::from_path(p)?,
                    (None, Some(id)) => ScriptBook::builtin(id)?,
                    (None, None) => unreachable!("validated above"),
                };
                Ok(Arc::new(ScriptedBackend::new(book)))
            }
            BackendKind::Llm => Ok(Arc::new(LlmBackend::new(Arc::new(self.chat_client()?)))),
        }
    }
}

/// Role-play turns through an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct LlmBackend {
    client: Arc<ChatClient>,
}

impl LlmBackend {
    pub fn new(client: Arc<ChatClient>) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &Arc<ChatClient> {
        &self.client
    }
}

impl AgentBackend for LlmBackend {
    fn generate_turn(&self, req: &TurnRequest<'_>) -> Result<AgentTurn, BackendError> {
        let messages = assemble_prompt(req);
        let text = self.client.complete(
            &messages,
            req.decoding.temperature,
            req.decoding.max_tokens_per_turn,
            req.seed,
        )?;
        Ok(AgentTurn {
            text: cap_words(text.trim(), req.decoding.max_tokens_per_turn as usize),
            annotations: None,
        })
    }

    fn kind(&self) -> &'static str {
        "llm"
    }
}

/// Truncates to at most `max` whitespace-separated words; every word costs
/// at least one token, so the result never exceeds a `max`-token budget by
/// word count.
fn cap_words(text: &str, max: usize) -> String {
    if text.split_whitespace().count() <= max {
        return text.to_owned();
    }
    text.split_whitespace()
        .take(max)
        .collect::<Vec<_>>()
        .join(" ")
}
