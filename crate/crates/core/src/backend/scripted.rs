//! Deterministic replay backend.
//!
//! A fixture holds scripted continuations, optionally keyed per
//! conversation (claim id). On each request the backend picks, among the
//! conversation's unconsumed entries, the one whose `match_key` is the
//! longest suffix of the prompt (earliest entry on ties). When no keyed entry
//! matches it falls back to the first unconsumed entry with an empty key.
//! Stop sequences are applied to the continuation exactly as a live server
//! would.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionRequest, CompletionResponse, FinishReason, LlmBackend};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub match_key: String,
    pub continuation: String,
}

impl ScriptEntry {
    pub fn keyed(key: impl Into<String>, continuation: impl Into<String>) -> Self {
        ScriptEntry { match_key: key.into(), continuation: continuation.into() }
    }

    pub fn next(continuation: impl Into<String>) -> Self {
        Self::keyed("", continuation)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedTranscript {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedTranscript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedTranscript { entries }
    }
}

/// On-disk fixture. `default` serves any conversation without its own entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFixture {
    #[serde(default)]
    pub default: ScriptedTranscript,
    #[serde(default)]
    pub conversations: BTreeMap<String, ScriptedTranscript>,
}

impl ScriptFixture {
    pub fn single(transcript: ScriptedTranscript) -> Self {
        ScriptFixture { default: transcript, conversations: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidRequest(format!("cannot read fixture {}: {e}", path.display())))?;
        let fixture: ScriptFixture = serde_json::from_str(&raw)
            .map_err(|e| BackendError::InvalidRequest(format!("malformed fixture {}: {e}", path.display())))?;
        fixture.check()?;
        Ok(fixture)
    }

    fn check(&self) -> Result<(), BackendError> {
        let all = std::iter::once(("<default>", &self.default))
            .chain(self.conversations.iter().map(|(k, v)| (k.as_str(), v)));
        for (name, t) in all {
            if let Some(i) = t.entries.iter().position(|e| e.continuation.is_empty()) {
                return Err(BackendError::InvalidRequest(format!(
                    "fixture conversation `{name}` entry {i} has an empty continuation"
                )));
            }
        }
        Ok(())
    }

    fn transcript_for(&self, conversation: &str) -> &ScriptedTranscript {
        self.conversations.get(conversation).unwrap_or(&self.default)
    }
}

pub struct ScriptedBackend {
    fixture: ScriptFixture,
    consumed: Mutex<HashMap<String, Vec<bool>>>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Result<Self, BackendError> {
        fixture.check()?;
        Ok(ScriptedBackend { fixture, consumed: Mutex::new(HashMap::new()) })
    }

    pub fn from_entries(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        Self::new(ScriptFixture::single(ScriptedTranscript::new(entries)))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Self::new(ScriptFixture::load(path)?)
    }

    pub fn fixture(&self) -> &ScriptFixture {
        &self.fixture
    }

    /// Fresh backend over the same fixture with all conversation state reset.
    pub fn fresh(&self) -> Self {
        ScriptedBackend { fixture: self.fixture.clone(), consumed: Mutex::new(HashMap::new()) }
    }

    /// Number of entries consumed so far in a conversation.
    pub fn consumed(&self, conversation: &str) -> usize {
        let state = self.consumed.lock().expect("scripted state poisoned");
        state.get(conversation).map_or(0, |v| v.iter().filter(|c| **c).count())
    }

    fn pick(entries: &[ScriptEntry], used: &[bool], prompt: &str) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in entries.iter().enumerate() {
            if used[i] || e.match_key.is_empty() || !prompt.ends_with(&e.match_key) {
                continue;
            }
            if best.is_none_or(|b| entries[b].match_key.len() < e.match_key.len()) {
                best = Some(i);
            }
        }
        best.or_else(|| entries.iter().enumerate().find(|(i, e)| !used[*i] && e.match_key.is_empty()).map(|(i, _)| i))
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let conversation = request.conversation.clone().unwrap_or_default();
        let transcript = self.fixture.transcript_for(&conversation);
        let mut state = self.consumed.lock().expect("scripted state poisoned");
        let used = state.entry(conversation.clone()).or_insert_with(|| vec![false; transcript.entries.len()]);
        let Some(i) = Self::pick(&transcript.entries, used, &request.prompt) else {
            let tail: String = {
                let chars: Vec<char> = request.prompt.chars().collect();
                chars[chars.len().saturating_sub(60)..].iter().collect()
            };
            return Err(BackendError::ScriptExhausted { conversation, tail });
        };
        used[i] = true;
        Ok(CompletionResponse::from_raw(
            &transcript.entries[i].continuation,
            &request.stop_sequences,
            FinishReason::NaturalEnd,
        ))
    }

    fn id(&self) -> String {
        "scripted".into()
    }
}
