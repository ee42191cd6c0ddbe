//! Completion over HTTP using the common `{prompt, stop, ...}` →
//! `{choices: [{text, finish_reason}]}` wire shape.
//!
//! Servers that stop on a sequence rarely say which one matched, and the
//! confidence gate needs to know. By default stops are therefore applied on
//! the client only; `server_side_stops` forwards them too and trusts a
//! `stop_reason`/`matched_stop`/`stopping_word` field when the server sends
//! one.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, CompletionRequest, CompletionResponse, FinishReason, LlmBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub server_side_stops: bool,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "https://api.openai.com/v1/completions".into(),
            model: "gpt-3.5-turbo-instruct".into(),
            timeout_secs: 60,
            api_key_env: "HISS_LLM_API_KEY".into(),
            server_side_stops: false,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Unavailable(format!("API key variable {} is not set", config.api_key_env)))?;
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: HttpBackendConfig, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, api_key: api_key.into(), agent }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if self.config.server_side_stops && !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        body
    }
}

/// Maps a decoded response body onto the stop contract.
pub(crate) fn interpret_body(body: &Value, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Unavailable("response has no choices".into()))?;
    let raw = choice.get("text").and_then(Value::as_str).unwrap_or_default();
    let server_reason = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("stop");
    let fallback = if server_reason == "length" { FinishReason::Length } else { FinishReason::NaturalEnd };

    let local = CompletionResponse::from_raw(raw, &request.stop_sequences, fallback);
    if local.finish_reason == FinishReason::StopSequenceHit {
        return Ok(local);
    }
    let reported =
        ["stop_reason", "matched_stop", "stopping_word"].iter().find_map(|k| choice.get(*k).and_then(Value::as_str));
    if let Some(matched) = reported {
        if let Some(stop) = request.stop_sequences.iter().find(|s| s.eq_ignore_ascii_case(matched)) {
            return Ok(CompletionResponse {
                text: local.text,
                finish_reason: FinishReason::StopSequenceHit,
                matched_stop: Some(stop.clone()),
            });
        }
    }
    Ok(local)
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.body(request))
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text =
            resp.body_mut().read_to_string().map_err(|e| BackendError::Unavailable(format!("reading body: {e}")))?;
        match status {
            200..=299 => {}
            402 => return Err(BackendError::BudgetExceeded(text)),
            429 if text.contains("quota") || text.contains("insufficient") => {
                return Err(BackendError::BudgetExceeded(text))
            }
            _ => return Err(BackendError::Unavailable(format!("HTTP {status}: {text}"))),
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::Unavailable(format!("malformed completion body: {e}")))?;
        interpret_body(&body, request)
    }

    fn id(&self) -> String {
        format!("http:{}", self.config.model)
    }
}
