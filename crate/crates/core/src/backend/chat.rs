//! Minimal OpenAI-compatible chat-completions client.
//!
//! Non-streaming `POST {base}/chat/completions` with bounded retries and a
//! cap on concurrent in-flight requests shared by every caller holding the
//! same client.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatCompletionRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub max_tokens: u32,
    pub stream: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice's message content from a response body.
pub fn parse_chat_response(body: &str) -> Result<String, String> {
    let resp: ChatCompletionResponse =
        serde_json::from_str(body).map_err(|e| format!("invalid response body: {e}"))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| "response has no choices".to_owned())?;
    match choice.message.content {
        Some(c) if !c.trim().is_empty() => Ok(c),
        _ => Err("response message content is empty".to_owned()),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, failed_attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(failed_attempt.saturating_sub(1))
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *p == 0 {
            p = self.cv.wait(p).unwrap_or_else(|e| e.into_inner());
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct ChatClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
    send_seed: bool,
    in_flight: Semaphore,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

pub struct ChatClientBuilder {
    base_url: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
    timeout: Duration,
    max_in_flight: usize,
    send_seed: bool,
}

impl ChatClientBuilder {
    pub fn api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n;
        self
    }

    pub fn send_seed(mut self, yes: bool) -> Self {
        self.send_seed = yes;
        self
    }

    pub fn build(self) -> Result<ChatClient, BackendError> {
        let base = self.base_url.trim_end_matches('/');
        let url = reqwest::Url::parse(base)
            .map_err(|e| BackendError::Config(format!("invalid endpoint base `{base}`: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(BackendError::Config(format!(
                "endpoint base must be http(s), got `{base}`"
            )));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(ChatClient {
            http,
            endpoint: format!("{base}/chat/completions"),
            api_key: self.api_key,
            model: self.model,
            retry: self.retry,
            send_seed: self.send_seed,
            in_flight: Semaphore::new(self.max_in_flight),
        })
    }
}

impl ChatClient {
    pub fn builder(base_url: impl Into<String>, model: impl Into<String>) -> ChatClientBuilder {
        ChatClientBuilder {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
            send_seed: false,
        }
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// Sends one completion request, retrying transient failures.
    pub fn complete(
        &self,
        messages: &[ChatMessage],
        temperature: f64,
        max_tokens: u32,
        seed: Option<u64>,
    ) -> Result<String, BackendError> {
        let body = ChatCompletionRequest {
            model: &self.model,
            messages,
            temperature,
            max_tokens,
            stream: false,
            seed: if self.send_seed { seed } else { None },
        };
        let attempts = self.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.try_once(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(msg)) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message: msg,
                    })
                }
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat request attempt {attempt}/{attempts} failed: {msg}");
                    last_error = msg;
                    if attempt < attempts {
                        thread::sleep(self.retry.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last_error,
        })
    }

    fn try_once(&self, body: &ChatCompletionRequest<'_>) -> Result<String, Attempt> {
        let _permit = self.in_flight.acquire();
        let mut req = self.http.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        parse_chat_response(&text).map_err(Attempt::Retry)
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

fn snippet(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hello"}}]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), "hello");
    }

    #[test]
    fn empty_content_is_an_error() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"  "}}]}"#;
        assert!(parse_chat_response(body).is_err());
        assert!(parse_chat_response(r#"{"choices":[]}"#).is_err());
        assert!(parse_chat_response("not json").is_err());
    }

    #[test]
    fn backoff_doubles_from_initial() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(2), Duration::from_secs(2));
    }

    #[test]
    fn request_shape_omits_seed_by_default() {
        let msgs = [ChatMessage::system("s"), ChatMessage::user("u")];
        let req = ChatCompletionRequest {
            model: "m",
            messages: &msgs,
            temperature: 0.7,
            max_tokens: 800,
            stream: false,
            seed: None,
        };
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["max_tokens"], 800);
        assert_eq!(v["stream"], false);
        assert!(v.get("seed").is_none());
    }

    #[test]
    fn rejects_non_http_base() {
        assert!(matches!(
            ChatClient::builder("ftp://host/v1", "m").build(),
            Err(BackendError::Config(_))
        ));
    }
}
