//! Chat-completion endpoints: configuration, the backend trait, and an
//! OpenAI-compatible HTTP client.

use std::sync::Arc;
use std::time::Duration;

use fmtcheck_core::{FormatInstruction, MetaConstraint};
use serde::{Deserialize, Serialize};

use crate::stub::{StubBackend, StubConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One call: `n` completions of `messages` for `instruction` in `round`.
/// The instruction and round are context for offline backends; HTTP
/// backends send only the messages.
#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub instruction: &'a FormatInstruction,
    pub round: u32,
    pub messages: Vec<Message>,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("credential error: {0}")]
    Auth(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {0}: {1}")]
    Status(u16, String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl BackendError {
    pub fn from_status(status: u16, body: &str) -> Self {
        let body: String = body.chars().take(200).collect();
        match status {
            401 | 403 => BackendError::Auth(format!("HTTP {status}: {body}")),
            _ => BackendError::Status(status, body),
        }
    }

    /// Worth another attempt after a backoff.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::Status(s, _) => *s == 408 || *s == 429 || *s >= 500,
            BackendError::Auth(_) | BackendError::Malformed(_) => false,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Vec<String>, BackendError>;
    fn identity(&self) -> String;
}

fn default_key_env() -> Option<String> {
    Some("OPENAI_API_KEY".into())
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key; `null` sends no
    /// credential.
    #[serde(default = "default_key_env")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EndpointConfig {
    #[serde(rename = "openai")]
    OpenAi(OpenAiConfig),
    Stub(StubConfig),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("malformed endpoint: {0}")]
    Invalid(String),
    #[error("credential error: environment variable {0} is not set")]
    MissingCredential(String),
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), EndpointError> {
        let bad = |m: &str| Err(EndpointError::Invalid(m.to_string()));
        match self {
            EndpointConfig::OpenAi(c) => {
                if c.base_url.trim().is_empty() || c.model.trim().is_empty() {
                    return bad("base_url and model must be non-empty");
                }
                if !(c.temperature >= 0.0 && c.temperature.is_finite()) {
                    return bad("temperature must be >= 0");
                }
                if !(c.timeout_secs > 0.0 && c.timeout_secs.is_finite()) {
                    return bad("timeout_secs must be > 0");
                }
                if c.max_tokens == 0 {
                    return bad("max_tokens must be > 0");
                }
                Ok(())
            }
            EndpointConfig::Stub(s) => {
                if !(0.0..=1.0).contains(&s.pass_rate) {
                    return bad("pass_rate must lie in [0, 1]");
                }
                Ok(())
            }
        }
    }

    pub fn identity(&self) -> String {
        match self {
            EndpointConfig::OpenAi(c) => format!("openai:{}@{}", c.model, c.base_url),
            EndpointConfig::Stub(s) => s.identity(),
        }
    }

    /// Builds the backend. Credentials are read from the environment here.
    pub fn connect(&self, library: &[MetaConstraint]) -> Result<Arc<dyn ChatBackend>, EndpointError> {
        self.validate()?;
        Ok(match self {
            EndpointConfig::OpenAi(c) => Arc::new(OpenAiBackend::new(c.clone())?),
            EndpointConfig::Stub(s) => Arc::new(StubBackend::new(s.clone(), library)),
        })
    }
}

pub struct OpenAiBackend {
    config: OpenAiConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
    n: u32,
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
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self, EndpointError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EndpointError::MissingCredential(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(OpenAiBackend { config, api_key, agent })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn call(&self, messages: &[Message], n: u32) -> Result<Vec<String>, BackendError> {
        let body = WireRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            n,
        };
        let mut req = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::from_status(status, &text));
        }
        let wire: WireResponse = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            other => BackendError::Malformed(other.to_string()),
        })?;
        Ok(wire
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Vec<String>, BackendError> {
        let mut out = Vec::with_capacity(request.n as usize);
        // Some servers ignore `n`; ask again for the remainder.
        for _ in 0..request.n {
            let missing = request.n as usize - out.len();
            if missing == 0 {
                break;
            }
            let got = self.call(&request.messages, missing as u32)?;
            if got.is_empty() {
                return Err(BackendError::Malformed("no choices".into()));
            }
            out.extend(got.into_iter().take(missing));
        }
        Ok(out)
    }

    fn identity(&self) -> String {
        format!("openai:{}@{}", self.config.model, self.config.base_url)
    }
}
