//! Chat plumbing: request/response types, a live OpenAI-compatible
//! transport with retry, a canned mock transport, and an in-flight limiter.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// Single user message at temperature 0, the default for judgment
    /// calls whose outcomes should be stable.
    pub fn single(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: Option<String>,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request must contain at least one message")]
    EmptyRequest,
    #[error("endpoint returned status {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: usize },
    #[error("transport failed after {attempts} attempt(s): {detail}")]
    Io { detail: String, attempts: usize },
    #[error("endpoint response missing {0}")]
    MalformedResponse(String),
    #[error("no mock rule matches the prompt starting {0:?}")]
    MockMiss(String),
}

pub trait ChatTransport: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Canned transport: first rule whose `prompt_contains` occurs anywhere in
/// the request's message contents wins. Misses are errors so fixture gaps
/// surface instead of silently passing empty strings downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub prompt_contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Default)]
pub struct MockTransport {
    rules: Vec<MockRule>,
}

impl MockTransport {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockTransport { rules }
    }

    /// Rule file content: a JSON array of {prompt_contains, response}.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(MockTransport { rules: serde_json::from_str(text)? })
    }
}

impl ChatTransport for MockTransport {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let haystack =
            request.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        for rule in &self.rules {
            if haystack.contains(&rule.prompt_contains) {
                return Ok(ChatResponse {
                    content: rule.response.clone(),
                    finish_reason: Some("stop".to_string()),
                    usage: None,
                });
            }
        }
        let head: String = haystack.chars().take(120).collect();
        Err(TransportError::MockMiss(head))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to and including the API version segment.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Retries after the first attempt, for 429, 5xx, and socket errors.
    pub max_retries: usize,
    pub initial_backoff: Duration,
    pub timeout: Option<Duration>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            api_key: None,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Some(Duration::from_secs(120)),
        }
    }
}

pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Retryable { status: Option<u16>, detail: String },
    Fatal(TransportError),
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(config.timeout).build().into();
        HttpTransport { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn try_once(&self, request: &ChatRequest) -> Result<ChatResponse, Attempt> {
        let mut builder = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }
        let mut response = builder.send_json(request).map_err(classify)?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Retryable { status: None, detail: e.to_string() })?;
        let choice = &value["choices"][0];
        let content = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                Attempt::Fatal(TransportError::MalformedResponse(
                    "choices[0].message.content".to_string(),
                ))
            })?
            .to_string();
        Ok(ChatResponse {
            content,
            finish_reason: choice["finish_reason"].as_str().map(str::to_string),
            usage: serde_json::from_value(value["usage"].clone()).ok(),
        })
    }
}

fn classify(e: ureq::Error) -> Attempt {
    match e {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            Attempt::Retryable { status: Some(code), detail: format!("status {code}") }
        }
        ureq::Error::StatusCode(code) => {
            Attempt::Fatal(TransportError::Status { status: code, attempts: 1 })
        }
        ureq::Error::Io(io) => Attempt::Retryable { status: None, detail: io.to_string() },
        ureq::Error::Timeout(t) => Attempt::Retryable { status: None, detail: t.to_string() },
        other => Attempt::Fatal(TransportError::Io { detail: other.to_string(), attempts: 1 }),
    }
}

impl ChatTransport for HttpTransport {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.try_once(request) {
                Ok(response) => return Ok(response),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable { status, detail }) => {
                    if attempts > self.config.max_retries {
                        return Err(match status {
                            Some(status) => TransportError::Status { status, attempts },
                            None => TransportError::Io { detail, attempts },
                        });
                    }
                    let factor = 1u32 << (attempts - 1).min(16);
                    log::debug!("retrying after {detail} (attempt {attempts})");
                    std::thread::sleep(self.config.initial_backoff * factor);
                }
            }
        }
    }
}

pub const DEFAULT_MAX_INFLIGHT: usize = 4;

/// Counting semaphore bounding concurrent transport calls.
pub struct Limiter {
    max: usize,
    inflight: Mutex<usize>,
    released: Condvar,
}

pub struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Limiter { max: max.max(1), inflight: Mutex::new(0), released: Condvar::new() }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.inflight.lock().unwrap();
        while *n >= self.max {
            n = self.released.wait(n).unwrap();
        }
        *n += 1;
        LimiterGuard { limiter: self }
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.inflight.lock().unwrap() -= 1;
        self.limiter.released.notify_one();
    }
}

/// A transport plus the shared limiter; the one place requests go through.
pub struct Gateway {
    transport: Box<dyn ChatTransport>,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(transport: Box<dyn ChatTransport>, max_inflight: usize) -> Self {
        Gateway { transport, limiter: Limiter::new(max_inflight) }
    }

    pub fn with_default_limit(transport: Box<dyn ChatTransport>) -> Self {
        Gateway::new(transport, DEFAULT_MAX_INFLIGHT)
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        if request.messages.is_empty() {
            return Err(TransportError::EmptyRequest);
        }
        let _permit = self.limiter.acquire();
        self.transport.chat(request)
    }
}
