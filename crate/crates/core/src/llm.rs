//! Chat-completion clients: an HTTP client for hosted models and a scripted
//! replay client for tests and reproducible data pipelines.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides the configured endpoint URL.
pub const ENDPOINT_ENV: &str = "SCENECODE_LLM_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    /// Transport failure, 5xx or 429 after all retries, or an exhausted script.
    #[error("infrastructure error: {0}")]
    Infra(String),
    /// Non-retryable rejection (4xx) or unusable client configuration.
    #[error("client configuration error: {0}")]
    Config(String),
}

/// Anything that turns a conversation into the next assistant message.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub provider: Provider,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Scripted provider: JSON object mapping an episode id to its responses.
    pub script: Option<String>,
    /// Log request and response bodies at debug level (the key is never logged).
    pub debug: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            provider: Provider::Http,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: 0.0,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            api_key_env: "SCENECODE_API_KEY".into(),
            script: None,
            debug: false,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err("llm.timeout_secs must be positive".into());
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return Err("llm.backoff_base_secs must be non-negative".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err("llm.temperature must be non-negative".into());
        }
        if self.provider == Provider::Scripted && self.script.is_none() {
            return Err("llm.script is required for the scripted provider".into());
        }
        Ok(())
    }

    /// Delay before retry `attempt` (1-based): base · 2^(attempt−1).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2f64.powi(attempt.saturating_sub(1).min(30) as i32);
        Duration::from_secs_f64(self.backoff_base_secs * factor)
    }
}

// ---------------------------------------------------------------------------
// Scripted client

/// Replays canned responses in order and records every prompt it receives.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    responses: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedClient {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { responses: Mutex::new(responses.into_iter().map(Into::into).collect()), prompts: Mutex::new(Vec::new()) }
    }

    /// Every conversation passed to `complete`, in call order.
    pub fn prompts(&self) -> Vec<Vec<ChatMessage>> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("script poisoned").len()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        self.prompts.lock().expect("prompt log poisoned").push(messages.to_vec());
        self.responses
            .lock()
            .expect("script poisoned")
            .pop_front()
            .ok_or_else(|| ClientError::Infra("scripted responses exhausted".into()))
    }
}

/// Canned responses per episode id, loaded from a JSON object file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptBook(pub BTreeMap<String, Vec<String>>);

impl ScriptBook {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid script file: {e}"))
    }

    /// A fresh client for one episode; unknown ids get an empty script.
    pub fn client_for(&self, id: &str) -> ScriptedClient {
        ScriptedClient::new(self.0.get(id).cloned().unwrap_or_default())
    }
}

/// Hands out the client for one episode (or augmentation group): a shared
/// live client, or a fresh scripted client keyed by id.
#[derive(Clone)]
pub enum ClientSource {
    Shared(Arc<dyn ChatClient>),
    Scripts(Arc<ScriptBook>),
}

impl ClientSource {
    pub fn client_for(&self, id: &str) -> Arc<dyn ChatClient> {
        match self {
            ClientSource::Shared(c) => Arc::clone(c),
            ClientSource::Scripts(book) => Arc::new(book.client_for(id)),
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP client

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Failure of a single attempt, before retry policy is applied.
enum Attempt {
    Retryable(String),
    Fatal(ClientError),
}

/// Chat-completion client speaking the common `{model, messages, temperature}` JSON shape.
pub struct HttpClient {
    config: ClientConfig,
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.config.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpClient {
    /// Builds a client, reading the endpoint override and API key from the environment.
    pub fn from_env(config: ClientConfig) -> Result<Self, ClientError> {
        let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| config.endpoint.clone());
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(config, endpoint, api_key)
    }

    pub fn new(config: ClientConfig, endpoint: String, api_key: Option<String>) -> Result<Self, ClientError> {
        config.validate().map_err(ClientError::Config)?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, endpoint, api_key, http })
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        let mut req = self.http.post(&self.endpoint).header("content-type", "application/json").body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retryable(format!("request to {} failed: {e}", self.endpoint)))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retryable(format!("reading response failed: {e}")))?;
        if self.config.debug {
            log::debug!("llm response {status}: {text}");
        }
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retryable(format!("server returned {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(ClientError::Config(format!(
                "server rejected the request with {status}: {text}"
            ))));
        }
        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(ClientError::Infra(format!("malformed completion response: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(ClientError::Infra("completion response has no message content".into())))
    }
}

impl ChatClient for HttpClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        if !messages.iter().any(|m| m.role == Role::User) {
            return Err(ClientError::Config("a completion request needs at least one user message".into()));
        }
        let body = serde_json::to_string(&WireRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        })
        .map_err(|e| ClientError::Config(e.to_string()))?;
        if self.config.debug {
            log::debug!("llm request to {} (authorization redacted): {body}", self.endpoint);
        }
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff(attempt);
                log::warn!("retrying completion ({attempt}/{}) in {delay:?}: {last}", self.config.max_retries);
                std::thread::sleep(delay);
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => last = msg,
            }
        }
        Err(ClientError::Infra(format!("{last} (after {} retries)", self.config.max_retries)))
    }
}
