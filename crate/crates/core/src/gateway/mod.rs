//! Uniform boundary for chat-completion and embedding calls.
//!
//! All model traffic flows through a [`Gateway`], which enforces the
//! configured in-flight bound and dispatches to a backend: either a remote
//! HTTP endpoint (with retries and exponential backoff) or a deterministic
//! scripted mock for offline runs and tests. Request and response values are
//! immutable and the gateway is safe to share across threads.

mod mock;
mod remote;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{
    pseudo_embedding, render_script, request_key, script_key, MockBackend, ScriptEntry,
    MOCK_EMBED_DIM, MOCK_FALLBACK_REPLY,
};
pub use remote::RemoteBackend;

/// Environment variable holding the chat-completion API key.
pub const ENV_LLM_API_KEY: &str = "FORGE_LLM_API_KEY";
/// Environment variable holding the embedding API key.
pub const ENV_EMBED_API_KEY: &str = "FORGE_EMBED_API_KEY";

/// Default temperature for grounded answer generation and parsing-sensitive
/// calls (judging, option selection).
pub const TEMPERATURE_GROUNDED: f64 = 0.2;
/// Default temperature for diversity-seeking generation (question and
/// candidate-instruction bootstrapping).
pub const TEMPERATURE_CREATIVE: f64 = 0.7;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("credential environment variable {0} is not set")]
    CredentialMissing(&'static str),
    #[error("backend unreachable after {attempts} attempt(s): {last_error}")]
    BackendUnreachable { attempts: u32, last_error: String },
    #[error("embedding input is empty or contains a blank text")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("mock script {path}: {reason}")]
    ScriptUnusable { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

/// A chat-completion request. Messages must be non-empty and alternate
/// roles starting with `user`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Single-turn request with the given system prompt and user message.
    pub fn single_turn(
        system_prompt: impl Into<String>,
        user_text: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
    ) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            messages: vec![Message::user(user_text)],
            temperature,
            max_tokens,
            seed: None,
        }
    }

    /// Text of the last user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "messages must be non-empty".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        let mut expected = Role::User;
        for (i, m) in self.messages.iter().enumerate() {
            if m.role != expected {
                return Err(GatewayError::InvalidRequest(format!(
                    "message {i} has role {:?}, expected {:?} (roles alternate starting with user)",
                    m.role, expected
                )));
            }
            expected = match expected {
                Role::User => Role::Assistant,
                Role::Assistant => Role::User,
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

/// A chat-completion response. `text` is empty only when
/// `finish_reason == Error`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
}

/// A fixed-length embedding with all-finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "embedding must be non-empty".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidRequest(
                "embedding contains non-finite value".into(),
            ));
        }
        let dim = values.len();
        Ok(EmbeddingVector { values, dim })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

/// Retry policy for transient remote failures. Attempt `k` (1-based) waits
/// `base_backoff_ms << (k - 1)` before retrying, so successive waits never
/// shrink.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff_ms: 200,
        }
    }
}

impl RetryPolicy {
    /// Backoff before retrying after failed attempt `attempt` (1-based).
    pub fn backoff_ms(&self, attempt: u32) -> u64 {
        self.base_backoff_ms
            .saturating_mul(1u64 << (attempt.saturating_sub(1)).min(16))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Remote only: base URL of the chat/embedding API.
    pub endpoint: Option<String>,
    pub model_name: String,
    pub max_inflight: usize,
    pub retry: RetryPolicy,
    /// Mock only: path to the scripted-reply file.
    pub script_path: Option<PathBuf>,
}

impl BackendConfig {
    pub fn mock(script_path: impl Into<PathBuf>) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: "mock".into(),
            max_inflight: 4,
            retry: RetryPolicy::default(),
            script_path: Some(script_path.into()),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_inflight == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_inflight must be >= 1".into(),
            ));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidConfig(
                "retry.max_attempts must be >= 1".into(),
            ));
        }
        match self.kind {
            BackendKind::Mock => {
                if self.script_path.is_none() {
                    return Err(GatewayError::InvalidConfig(
                        "mock backend requires script_path".into(),
                    ));
                }
            }
            BackendKind::Remote => {
                if self.endpoint.as_deref().map_or(true, str::is_empty) {
                    return Err(GatewayError::InvalidConfig(
                        "remote backend requires endpoint".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A chat/embedding provider behind the gateway. Implementations must be
/// thread-safe; the gateway may dispatch calls from many threads at once
/// (bounded by `max_inflight`).
pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Counting semaphore guarding the in-flight bound.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Limiter {
            free: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.limiter.free.lock().unwrap();
        *free += 1;
        self.limiter.cv.notify_one();
    }
}

/// Shareable front door for all model calls.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    limiter: Limiter,
}

impl Gateway {
    /// Build a gateway from config, constructing the matching backend.
    pub fn new(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend: Arc<dyn Backend> = match cfg.kind {
            BackendKind::Mock => {
                let path = cfg.script_path.as_ref().expect("validated");
                Arc::new(MockBackend::from_script_file(path)?)
            }
            BackendKind::Remote => {
                let endpoint = cfg.endpoint.clone().expect("validated");
                Arc::new(RemoteBackend::new(
                    endpoint,
                    cfg.model_name.clone(),
                    cfg.retry,
                ))
            }
        };
        Ok(Gateway {
            backend,
            limiter: Limiter::new(cfg.max_inflight),
        })
    }

    /// Wrap an arbitrary backend (used by tests to inject instrumented or
    /// programmable fakes).
    pub fn from_backend(backend: Arc<dyn Backend>, max_inflight: usize) -> Self {
        Gateway {
            backend,
            limiter: Limiter::new(max_inflight.max(1)),
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let _permit = self.limiter.acquire();
        self.backend.complete(req)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() || texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::EmptyInput);
        }
        let _permit = self.limiter.acquire();
        self.backend.embed(texts)
    }
}
