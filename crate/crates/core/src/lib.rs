//! Claim verification for news statements.
//!
//! A language model decomposes a claim into subclaims, probes each with
//! questions, says whether it can answer confidently, and falls back to web
//! search when it cannot. Baseline prompting methods, dataset loaders and
//! macro-F1 evaluation live alongside.

pub mod backend;
pub mod baselines;
pub mod datasets;
pub mod eval;
pub mod labels;
pub mod model;
pub mod protocol;
pub mod runner;
pub mod search;

pub use backend::{
    BackendError, CompletionRequest, CompletionResponse, FinishReason, HttpBackend, HttpBackendConfig, LlmBackend,
    ScriptEntry, ScriptFixture, ScriptedBackend,
};
pub use labels::{parse_final_line, parse_label_fragment, LabelParseError};
pub use model::{
    validate_trace, Claim, Confidence, Label, LabelScheme, Method, QaStep, SchemeError, SearchPolicy, Subclaim,
    SubclaimVerification, TraceFlag, Verdict, VerificationTrace, Violation,
};
pub use protocol::{run_hiss, DemoSet, DemoStyle, ProtocolError, RunConfig};
pub use runner::{RunSummary, Runner};
pub use search::{EvidenceSnippet, SearchCache, SearchError, SearchHit, SearchService};
