//! Domain types shared by every stage of the verification pipeline.
//!
//! Everything here is an immutable value once built. Traces serialize to
//! JSON with lower_snake_case field names, one trace per line in batch
//! output.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::search::EvidenceSnippet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemeError {
    #[error("label scheme `{0}` has no labels")]
    EmptyScheme(String),
    #[error("label `{label}` appears twice in scheme `{scheme}`")]
    DuplicateLabel { scheme: String, label: String },
    #[error("`{label}` is not a label of scheme `{scheme}`")]
    NotInScheme { scheme: String, label: String },
}

/// An ordered set of veracity labels. The order fixes the confusion-matrix
/// axes and the way the label set is spelled out in prompts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct LabelScheme {
    name: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    name: String,
    labels: Vec<String>,
}

impl TryFrom<RawScheme> for LabelScheme {
    type Error = SchemeError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        LabelScheme::new(raw.name, raw.labels)
    }
}

impl From<LabelScheme> for RawScheme {
    fn from(s: LabelScheme) -> Self {
        RawScheme { name: s.name, labels: s.labels }
    }
}

impl LabelScheme {
    /// Builds a scheme, lowercasing every label and keeping the given order.
    pub fn new<I, S>(name: impl Into<String>, labels: I) -> Result<Self, SchemeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        let mut out: Vec<String> = Vec::new();
        for label in labels {
            let label = label.as_ref().trim().to_lowercase();
            if out.contains(&label) {
                return Err(SchemeError::DuplicateLabel { scheme: name, label });
            }
            out.push(label);
        }
        if out.is_empty() || out.iter().any(|l| l.is_empty()) {
            return Err(SchemeError::EmptyScheme(name));
        }
        Ok(LabelScheme { name, labels: out })
    }

    /// Three-class RAWFC scheme.
    pub fn rawfc() -> Self {
        Self::new("rawfc", ["true", "half", "false"]).expect("static scheme")
    }

    /// Six-class LIAR scheme, ordered from least to most truthful as the
    /// prompts list it.
    pub fn liar() -> Self {
        Self::new("liar", ["pants-fire", "false", "barely-true", "half-true", "mostly-true", "true"])
            .expect("static scheme")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "liar" => Some(Self::liar()),
            "rawfc" => Some(Self::rawfc()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.labels.iter().position(|l| l == label.as_str())
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.index_of(label).is_some()
    }

    /// Case-insensitive lookup.
    pub fn label(&self, value: &str) -> Result<Label, SchemeError> {
        let wanted = value.trim().to_lowercase();
        if self.labels.contains(&wanted) {
            Ok(Label(wanted))
        } else {
            Err(SchemeError::NotInScheme { scheme: self.name.clone(), label: value.to_string() })
        }
    }

    pub fn label_at(&self, index: usize) -> Label {
        Label(self.labels[index].clone())
    }

    /// The label set as written in prompts: `a, b, and c`.
    pub fn spelled_out(&self) -> String {
        match self.labels.as_slice() {
            [] => String::new(),
            [only] => only.clone(),
            [a, b] => format!("{a} and {b}"),
            [init @ .., last] => format!("{}, and {last}", init.join(", ")),
        }
    }
}

/// One member of a [`LabelScheme`], stored lowercase. Obtain through
/// [`LabelScheme::label`] so membership holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Label>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Claim {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Claim { id: id.into(), text: text.into(), gold: None, metadata: BTreeMap::new() }
    }

    pub fn with_gold(mut self, gold: Label) -> Self {
        self.gold = Some(gold);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subclaim {
    /// 1-based.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Confident,
    NotConfident,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaStep {
    pub question: String,
    pub confidence: Confidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceSnippet>,
    pub answer: String,
    /// A search ran for this step but nothing survived filtering.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_evidence: bool,
}

impl QaStep {
    pub fn searched(&self) -> bool {
        self.evidence.is_some() || self.no_evidence
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubclaimVerification {
    pub subclaim: Subclaim,
    pub steps: Vec<QaStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub raw_line: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "hiss")]
    Hiss,
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "cot")]
    VanillaCot,
    #[serde(rename = "search-cot")]
    SearchCot,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hiss => "hiss",
            Method::Standard => "standard",
            Method::VanillaCot => "cot",
            Method::SearchCot => "search-cot",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hiss" => Ok(Method::Hiss),
            "standard" => Ok(Method::Standard),
            "cot" | "vanilla-cot" => Ok(Method::VanillaCot),
            "search-cot" => Ok(Method::SearchCot),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// When a probing question is sent to the search engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPolicy {
    Never,
    Always,
    /// Search only when the model says it is not confident.
    #[default]
    SelfDecide,
}

impl SearchPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchPolicy::Never => "never",
            SearchPolicy::Always => "always",
            SearchPolicy::SelfDecide => "self_decide",
        }
    }
}

impl std::str::FromStr for SearchPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "never" => Ok(SearchPolicy::Never),
            "always" => Ok(SearchPolicy::Always),
            "self_decide" => Ok(SearchPolicy::SelfDecide),
            other => Err(format!("unknown search policy `{other}`")),
        }
    }
}

/// Things that went off the happy path but still produced a usable trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceFlag {
    /// The confidence reply was neither a stop on "no" nor a leading "yes".
    AmbiguousConfidence {
        subclaim: usize,
        step: usize,
        reply: String,
    },
    QuestionCapHit {
        subclaim: usize,
    },
    SubclaimCapHit {
        generated: usize,
    },
    /// Consecutive repeated generations folded into one structured entry.
    DuplicateCollapsed {
        subclaim: usize,
        what: String,
    },
    /// The final label line had to be elicited with an explicit prefix.
    FinalLineElicited,
    /// Search-augmented CoT found no usable background snippet.
    NoBackground,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTrace {
    pub claim: Claim,
    pub method: Method,
    pub scheme: LabelScheme,
    pub search_policy: SearchPolicy,
    pub decompose: bool,
    pub step_by_step: bool,
    pub shot_count: usize,
    pub subclaims: Vec<SubclaimVerification>,
    pub verdict: Verdict,
    /// Reasoning chain for the CoT baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<TraceFlag>,
    pub config_fingerprint: String,
    pub transcript: String,
}

impl VerificationTrace {
    pub fn steps(&self) -> impl Iterator<Item = &QaStep> {
        self.subclaims.iter().flat_map(|s| s.steps.iter())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

/// One broken invariant found by [`validate_trace`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: &str) -> Self {
        Violation { field: field.into(), rule: rule.to_string() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every structural invariant of a trace. An empty result means the
/// trace is well formed.
pub fn validate_trace(trace: &VerificationTrace) -> Vec<Violation> {
    let mut out = Vec::new();

    if trace.claim.text.trim().is_empty() {
        out.push(Violation::new("claim.text", "non-empty"));
    }
    if let Some(gold) = &trace.claim.gold {
        if !trace.scheme.contains(gold) {
            out.push(Violation::new("claim.gold", "label-in-scheme"));
        }
    }
    if !trace.scheme.contains(&trace.verdict.label) {
        out.push(Violation::new("verdict.label", "label-in-scheme"));
    }
    if !trace.verdict.raw_line.to_lowercase().contains("classified as") {
        out.push(Violation::new("verdict.raw_line", "contains-classified-as"));
    }

    if trace.method == Method::Hiss {
        if trace.subclaims.is_empty() {
            out.push(Violation::new("subclaims", "empty-subclaims"));
        }
        if !trace.decompose && (trace.subclaims.len() != 1 || trace.subclaims[0].subclaim.text != trace.claim.text) {
            out.push(Violation::new("subclaims", "no-decompose-single-subclaim"));
        }
    }

    for (i, sv) in trace.subclaims.iter().enumerate() {
        let at = format!("subclaims[{i}]");
        if sv.subclaim.index != i + 1 {
            out.push(Violation::new(format!("{at}.subclaim.index"), "sequential-from-one"));
        }
        if sv.subclaim.text.trim().is_empty() {
            out.push(Violation::new(format!("{at}.subclaim.text"), "non-empty"));
        }
        if sv.steps.is_empty() {
            out.push(Violation::new(format!("{at}.steps"), "empty-steps"));
        }
        for (j, step) in sv.steps.iter().enumerate() {
            let at = format!("{at}.steps[{j}]");
            if step.question.trim().is_empty() {
                out.push(Violation::new(format!("{at}.question"), "non-empty"));
            } else if !trace.transcript.contains(&step.question) {
                out.push(Violation::new(format!("{at}.question"), "verbatim-in-transcript"));
            }
            if step.answer.trim().is_empty() {
                out.push(Violation::new(format!("{at}.answer"), "non-empty"));
            } else if !trace.transcript.contains(&step.answer) {
                out.push(Violation::new(format!("{at}.answer"), "verbatim-in-transcript"));
            }
            if step.evidence.is_some() && step.no_evidence {
                out.push(Violation::new(format!("{at}.evidence"), "evidence-and-no-evidence"));
            }
            match trace.search_policy {
                SearchPolicy::Never => {
                    if step.searched() {
                        out.push(Violation::new(format!("{at}.evidence"), "evidence-under-never"));
                    }
                }
                SearchPolicy::Always => {
                    if !step.searched() {
                        out.push(Violation::new(format!("{at}.evidence"), "missing-evidence"));
                    }
                }
                SearchPolicy::SelfDecide => match (step.confidence, step.searched()) {
                    (Confidence::Confident, true) => {
                        out.push(Violation::new(format!("{at}.evidence"), "evidence-on-confident"))
                    }
                    (Confidence::NotConfident, false) => {
                        out.push(Violation::new(format!("{at}.evidence"), "missing-evidence"))
                    }
                    _ => {}
                },
            }
            if let Some(ev) = &step.evidence {
                if ev.text.trim().is_empty() {
                    out.push(Violation::new(format!("{at}.evidence.text"), "non-empty"));
                }
            }
        }
    }
    out
}

/// Stable fingerprint of everything that shapes a run's output.
#[derive(Debug, Clone, Serialize)]
pub struct FingerprintInput<'a> {
    pub method: Method,
    pub scheme: &'a LabelScheme,
    pub shot_count: usize,
    pub search_policy: SearchPolicy,
    pub decompose: bool,
    pub step_by_step: bool,
    pub backend_id: &'a str,
    pub prompt_asset: &'a str,
}

impl FingerprintInput<'_> {
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("fingerprint input serializes");
        let hash = Sha256::digest(&canonical);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
