//! Reading structure back out of generated text.

use crate::backend::CompletionResponse;
use crate::labels::parse_final_line;
use crate::model::{Confidence, LabelScheme, Subclaim, VerificationTrace};

use super::prompts::{self, CONFIDENCE_PROBE, NO_SPLIT_SENTENCE};

/// Outcome of parsing a decomposition reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub subclaims: Vec<Subclaim>,
    /// The model chose not to split; the single subclaim is the claim.
    pub no_split: bool,
    /// Consecutive duplicate items were folded.
    pub collapsed: bool,
}

fn numbered_item(line: &str) -> Option<&str> {
    let t = line.trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    let item = rest.trim();
    (!item.is_empty()).then_some(item)
}

/// Parses a numbered subclaim list, or the no-split sentence. `None` when
/// the text is neither.
pub fn parse_decomposition(text: &str, claim: &str) -> Option<Decomposition> {
    if text.to_ascii_lowercase().contains("will not split the claim") {
        return Some(Decomposition {
            subclaims: vec![Subclaim { index: 1, text: claim.to_string() }],
            no_split: true,
            collapsed: false,
        });
    }
    let mut items: Vec<&str> = Vec::new();
    let mut collapsed = false;
    for item in text.lines().filter_map(numbered_item) {
        if items.last() == Some(&item) {
            collapsed = true;
        } else {
            items.push(item);
        }
    }
    if items.is_empty() {
        return None;
    }
    let subclaims =
        items.into_iter().enumerate().map(|(i, t)| Subclaim { index: i + 1, text: t.to_string() }).collect();
    Some(Decomposition { subclaims, no_split: false, collapsed })
}

/// The probing question in a question-call reply, if the reply is one.
/// Returns the question and whether consecutive repeats were folded.
pub fn extract_question(text: &str) -> Option<(String, bool)> {
    if !text.trim_start().starts_with("Question:") {
        return None;
    }
    let mut questions: Vec<&str> = Vec::new();
    let mut collapsed = false;
    for seg in text.split("Question:").skip(1) {
        let q = seg.lines().next().unwrap_or_default().trim();
        if q.is_empty() {
            continue;
        }
        if questions.last() == Some(&q) {
            collapsed = true;
        } else {
            questions.push(q);
        }
    }
    questions.last().map(|q| (q.to_string(), collapsed))
}

fn contains_word(text: &str, word: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    lower.match_indices(word).any(|(i, _)| {
        let before = lower[..i].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after = lower[i + word.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        before && after
    })
}

/// Reads the confidence reply. The second value is true when the reply was
/// neither a leading "yes" nor a stop on "no" and was taken as confident.
pub fn detect_confidence(reply: &CompletionResponse) -> (Confidence, bool) {
    let first_line = reply.text.split('\n').next().unwrap_or_default();
    if contains_word(first_line, "yes") {
        (Confidence::Confident, false)
    } else if reply.hit_stop("no") && !reply.text.contains('\n') {
        (Confidence::NotConfident, false)
    } else {
        (Confidence::Confident, true)
    }
}

/// Structural skeleton of a HiSS response: subclaims, their questions with
/// confidence and answers, and the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outline {
    pub no_split: bool,
    pub subclaims: Vec<OutlineSubclaim>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlineSubclaim {
    pub text: String,
    pub steps: Vec<OutlineStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlineStep {
    pub question: String,
    pub confidence: Option<Confidence>,
    pub answer: String,
}

impl Outline {
    pub fn of_trace(trace: &VerificationTrace) -> Self {
        let no_split = trace.subclaims.len() == 1 && trace.subclaims[0].subclaim.text == trace.claim.text;
        Outline {
            no_split,
            subclaims: trace
                .subclaims
                .iter()
                .map(|sv| OutlineSubclaim {
                    text: sv.subclaim.text.clone(),
                    steps: sv
                        .steps
                        .iter()
                        .map(|s| OutlineStep {
                            question: s.question.clone(),
                            confidence: Some(s.confidence),
                            answer: s.answer.clone(),
                        })
                        .collect(),
                })
                .collect(),
            label: Some(trace.verdict.label.as_str().to_string()),
        }
    }

    /// Renders the outline in demo form (the text after `A: `).
    pub fn render(&self, scheme: &LabelScheme) -> String {
        let mut out = String::new();
        if self.no_split {
            out.push_str(NO_SPLIT_SENTENCE);
            out.push('\n');
        } else {
            out.push_str(&format!(
                "A fact checker will decompose the claim into {} subclaims that are easier to verify:\n",
                self.subclaims.len()
            ));
            for (i, s) in self.subclaims.iter().enumerate() {
                out.push_str(&format!("{}. {}\n", i + 1, s.text));
            }
        }
        for (i, s) in self.subclaims.iter().enumerate() {
            let idx = (!self.no_split).then_some(i + 1);
            out.push_str(&prompts::subclaim_header(idx));
            out.push('\n');
            for step in &s.steps {
                out.push_str(&format!("Question: {}\n", step.question));
                match step.confidence {
                    Some(Confidence::Confident) => out.push_str(&format!("{CONFIDENCE_PROBE} Yes.\n")),
                    Some(Confidence::NotConfident) => out.push_str(&format!("{CONFIDENCE_PROBE} No.\n")),
                    None => {}
                }
                out.push_str(&format!("Answer: {}\n", step.answer));
            }
        }
        if let Some(label) = &self.label {
            out.push_str(&format!("{} {label}.", prompts::final_prefix(scheme)));
        }
        out
    }

    /// Parses demo-form text. `claim` fills the single subclaim of a
    /// no-split response.
    pub fn parse(text: &str, claim: &str, scheme: &LabelScheme) -> Self {
        let mut no_split = false;
        let mut listed: Vec<String> = Vec::new();
        let mut blocks: Vec<Vec<OutlineStep>> = Vec::new();
        let mut label = None;
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line.contains(NO_SPLIT_SENTENCE) {
                no_split = true;
            } else if line.starts_with("To verify") {
                blocks.push(Vec::new());
            } else if let Some((q, _)) = extract_question(line) {
                if let Some(block) = blocks.last_mut() {
                    block.push(OutlineStep { question: q, confidence: None, answer: String::new() });
                }
            } else if let Some(reply) = line.strip_prefix(CONFIDENCE_PROBE) {
                let c = if contains_word(reply, "yes") { Confidence::Confident } else { Confidence::NotConfident };
                if let Some(step) = blocks.last_mut().and_then(|b| b.last_mut()) {
                    step.confidence = Some(c);
                }
            } else if let Some(ans) = line.strip_prefix("Answer:") {
                if let Some(step) = blocks.last_mut().and_then(|b| b.last_mut()) {
                    if step.answer.is_empty() {
                        step.answer = ans.trim().to_string();
                    } else {
                        step.answer = format!("{} {}", step.answer, ans.trim());
                    }
                }
            } else if line.to_ascii_lowercase().contains("classified as") {
                label = parse_final_line(line, scheme).ok().map(|v| v.label.as_str().to_string());
            } else if blocks.is_empty() {
                if let Some(item) = numbered_item(line) {
                    listed.push(item.to_string());
                }
            }
        }
        let texts = if no_split { vec![claim.to_string()] } else { listed };
        let subclaims = texts
            .into_iter()
            .zip(blocks.into_iter().chain(std::iter::repeat_with(Vec::new)))
            .map(|(text, steps)| OutlineSubclaim { text, steps })
            .collect();
        Outline { no_split, subclaims, label }
    }
}
