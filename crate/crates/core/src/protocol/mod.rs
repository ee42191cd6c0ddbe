//! The verification protocol.
//!
//! One prompt grows append-only through the whole conversation: demos and
//! claim, decomposition, then per subclaim a header and a loop of question,
//! confidence probe, optional search, and answer, then the final label line.

mod demos;
mod parse;
pub mod prompts;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::labels::LabelParseError;
use crate::model::{LabelScheme, SearchPolicy, TraceFlag};
use crate::search::SearchError;

pub use demos::{DemoSet, DemoStyle};
pub use parse::{
    detect_confidence, extract_question, parse_decomposition, Decomposition, Outline, OutlineStep, OutlineSubclaim,
};
pub use run::{assemble_prompt, run_decomposition, run_final_prediction, run_hiss, run_subclaim_loop};
pub(crate) use run::{generate, with_demos};

pub const DEFAULT_SHOT_COUNT: usize = 4;
pub const DEFAULT_MAX_SUBCLAIMS: usize = 6;
pub const DEFAULT_MAX_QUESTIONS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{needed} demonstrations requested but only {available} available")]
    InsufficientDemos { needed: usize, available: usize },
    #[error("decomposition reply has no subclaim list: {0:?}")]
    UnparseableDecomposition(String),
    #[error("no final label line was produced")]
    NoFinalLine,
    #[error("predicted `{0}` is not a label of the scheme")]
    LabelNotInScheme(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("claim {id}: {source}")]
    Claim { id: String, source: Box<ProtocolError> },
}

impl ProtocolError {
    pub fn for_claim(self, id: &str) -> Self {
        match self {
            e @ ProtocolError::Claim { .. } => e,
            e => ProtocolError::Claim { id: id.to_string(), source: Box::new(e) },
        }
    }

    /// The innermost error, without claim context.
    pub fn root(&self) -> &ProtocolError {
        match self {
            ProtocolError::Claim { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures to read the model's output, as opposed to
    /// infrastructure failures.
    pub fn is_parse_failure(&self) -> bool {
        matches!(
            self.root(),
            ProtocolError::UnparseableDecomposition(_)
                | ProtocolError::NoFinalLine
                | ProtocolError::LabelNotInScheme(_)
        )
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self.root() {
            ProtocolError::InsufficientDemos { .. } => "insufficient_demos",
            ProtocolError::UnparseableDecomposition(_) => "unparseable_decomposition",
            ProtocolError::NoFinalLine => "no_final_line",
            ProtocolError::LabelNotInScheme(_) => "label_not_in_scheme",
            ProtocolError::InvalidConfig(_) => "invalid_config",
            ProtocolError::Backend(BackendError::BudgetExceeded(_)) => "budget_exceeded",
            ProtocolError::Backend(BackendError::ScriptExhausted { .. }) => "script_exhausted",
            ProtocolError::Backend(_) => "backend_error",
            ProtocolError::Search(SearchError::FrozenCacheMiss(_)) => "frozen_cache_miss",
            ProtocolError::Search(_) => "search_error",
            ProtocolError::Claim { .. } => unreachable!("root is never a claim wrapper"),
        }
    }
}

impl From<LabelParseError> for ProtocolError {
    fn from(e: LabelParseError) -> Self {
        match e {
            LabelParseError::NoFinalLine => ProtocolError::NoFinalLine,
            LabelParseError::LabelNotInScheme(l) => ProtocolError::LabelNotInScheme(l),
        }
    }
}

/// Knobs of one run. Defaults reproduce the full method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scheme: LabelScheme,
    pub shot_count: usize,
    pub search_policy: SearchPolicy,
    pub decompose: bool,
    pub step_by_step: bool,
    pub max_subclaims: usize,
    pub max_questions_per_subclaim: usize,
    pub max_tokens: u32,
}

impl RunConfig {
    pub fn new(scheme: LabelScheme) -> Self {
        RunConfig {
            scheme,
            shot_count: DEFAULT_SHOT_COUNT,
            search_policy: SearchPolicy::SelfDecide,
            decompose: true,
            step_by_step: true,
            max_subclaims: DEFAULT_MAX_SUBCLAIMS,
            max_questions_per_subclaim: DEFAULT_MAX_QUESTIONS,
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.max_subclaims == 0 || self.max_questions_per_subclaim == 0 {
            return Err(ProtocolError::InvalidConfig("caps must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProtocolError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Assembled,
    Decomposed,
    Questioning { subclaim: usize },
    Predicted,
}

/// The growing prompt of one claim's conversation. Text is only ever
/// appended.
#[derive(Debug, Clone)]
pub struct ProtocolState {
    prompt: String,
    pub conversation: String,
    pub phase: Phase,
    pub flags: Vec<TraceFlag>,
    pub max_tokens: u32,
    /// Text of the question call that ended the last loop; it may already
    /// hold the closing line.
    pub(crate) tail: String,
}

impl ProtocolState {
    pub fn new(prompt: String, conversation: impl Into<String>) -> Self {
        ProtocolState {
            prompt,
            conversation: conversation.into(),
            phase: Phase::Assembled,
            flags: Vec::new(),
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            tail: String::new(),
        }
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn append(&mut self, text: &str) {
        self.prompt.push_str(text);
    }

    pub fn ensure_newline(&mut self) {
        if !self.prompt.ends_with('\n') {
            self.prompt.push('\n');
        }
    }

    pub fn into_transcript(self) -> String {
        self.prompt
    }
}
