//! Text-completion backends with stop-sequence semantics.
//!
//! Stop sequences are matched ASCII case-insensitively and the returned text
//! never contains any of them: it ends right before the earliest occurrence.
//! The protocol relies on this to pause the model after a question and to
//! detect a "no" reply to the confidence probe.

mod http;
mod scripted;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{ScriptEntry, ScriptFixture, ScriptedBackend, ScriptedTranscript};

pub const DEFAULT_MAX_TOKENS: u32 = 512;
/// The hosted completion APIs this targets accept at most four stops.
pub const MAX_STOP_SEQUENCES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("token or credit budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("scripted transcript exhausted for conversation `{conversation}` (prompt ends with {tail:?})")]
    ScriptExhausted { conversation: String, tail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
    /// Keys per-conversation state in stateful backends (the claim id).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop_sequences: Vec::new(),
            conversation: None,
        }
    }

    pub fn stops<I, S>(mut self, stops: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop_sequences = stops.into_iter().map(Into::into).collect();
        self
    }

    pub fn max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn conversation(mut self, id: impl Into<String>) -> Self {
        self.conversation = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.stop_sequences.len() > MAX_STOP_SEQUENCES {
            return Err(BackendError::InvalidRequest(format!(
                "at most {MAX_STOP_SEQUENCES} stop sequences, got {}",
                self.stop_sequences.len()
            )));
        }
        if self.stop_sequences.iter().any(String::is_empty) {
            return Err(BackendError::InvalidRequest("empty stop sequence".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    StopSequenceHit,
    Length,
    NaturalEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    /// The stop sequence (as given in the request) that ended generation.
    pub matched_stop: Option<String>,
}

impl CompletionResponse {
    /// Applies local stop truncation to raw generated text. `fallback` is the
    /// finish reason to report when no stop occurs in `raw`.
    pub fn from_raw(raw: &str, stops: &[String], fallback: FinishReason) -> Self {
        match find_earliest_stop(raw, stops) {
            Some((pos, idx)) => CompletionResponse {
                text: raw[..pos].to_string(),
                finish_reason: FinishReason::StopSequenceHit,
                matched_stop: Some(stops[idx].clone()),
            },
            None => CompletionResponse { text: raw.to_string(), finish_reason: fallback, matched_stop: None },
        }
    }

    pub fn hit_stop(&self, stop: &str) -> bool {
        self.finish_reason == FinishReason::StopSequenceHit
            && self.matched_stop.as_deref().is_some_and(|m| m.eq_ignore_ascii_case(stop))
    }
}

/// Byte offset and stop index of the earliest case-insensitive stop
/// occurrence. Ties at one offset go to the longest stop.
pub fn find_earliest_stop(text: &str, stops: &[String]) -> Option<(usize, usize)> {
    // ASCII lowercasing preserves byte offsets, so positions map back to `text`.
    let hay = text.to_ascii_lowercase();
    let mut best: Option<(usize, usize)> = None;
    for (idx, stop) in stops.iter().enumerate() {
        if stop.is_empty() {
            continue;
        }
        let needle = stop.to_ascii_lowercase();
        if let Some(pos) = hay.find(&needle) {
            best = match best {
                Some((bp, bi)) if bp < pos || (bp == pos && stops[bi].len() >= stop.len()) => Some((bp, bi)),
                _ => Some((pos, idx)),
            };
        }
    }
    best
}

/// Truncates `text` before the earliest stop occurrence.
pub fn truncate_at_stops<'a>(text: &'a str, stops: &[String]) -> (&'a str, Option<usize>) {
    match find_earliest_stop(text, stops) {
        Some((pos, idx)) => (&text[..pos], Some(idx)),
        None => (text, None),
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Identifier folded into the run fingerprint.
    fn id(&self) -> String;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_base_ms: 500 }
    }
}

/// Calls `backend`, retrying only on [`BackendError::Unavailable`] with
/// exponential backoff (`base`, `2*base`, `4*base`, ...).
pub fn with_retry<B: LlmBackend + ?Sized>(
    backend: &B,
    request: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<CompletionResponse, BackendError> {
    if policy.max_attempts == 0 {
        return Err(BackendError::InvalidRequest("max_attempts must be at least 1".into()));
    }
    let mut attempt = 1;
    loop {
        match backend.complete(request) {
            Err(BackendError::Unavailable(msg)) if attempt < policy.max_attempts => {
                let delay = policy.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("backend unavailable (attempt {attempt}): {msg}; retrying in {delay} ms");
                thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Wraps a backend so every call goes through [`with_retry`].
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: LlmBackend> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Retrying { inner, policy }
    }
}

impl<B: LlmBackend> LlmBackend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        with_retry(&self.inner, request, self.policy)
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}
