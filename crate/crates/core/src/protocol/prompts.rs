//! Fixed prompt fragments and the claim blocks appended after the demos.

use crate::model::LabelScheme;

pub const NO_SPLIT_SENTENCE: &str =
    "A fact checker will not split the claim since the original claim is easier to verify.";

pub const CONFIDENCE_PROBE: &str =
    "Tell me if you are confident to answer the question or not. Answer with \"yes\" or \"no\":";

const STEP_TAIL: &str = "a fact-checker will go through a step-by-step process to ask and answer a series of questions relevant to its factuality. Here are the specific steps he/she raise each question and look for an answer:";

const SEARCH_TAIL: &str = "a fact-checker will search for background information relevant to its factuality:";

/// Header opening the question block of subclaim `index`, or of the whole
/// claim when `index` is `None`.
pub fn subclaim_header(index: Option<usize>) -> String {
    match index {
        Some(j) => format!("To verify subclaim {j}, {STEP_TAIL}"),
        None => format!("To verify the claim, {STEP_TAIL}"),
    }
}

/// Header used when step-by-step questioning is switched off.
pub fn search_header(index: Option<usize>) -> String {
    match index {
        Some(j) => format!("To verify subclaim {j}, {SEARCH_TAIL}"),
        None => format!("To verify the claim, {SEARCH_TAIL}"),
    }
}

pub fn final_prefix(scheme: &LabelScheme) -> String {
    format!(
        "Based on the answers to these questions, it is clear that among {}, the claim is classified as",
        scheme.spelled_out()
    )
}

pub fn hiss_claim_block(claim: &str) -> String {
    format!("Q: Claim: \"{claim}\"\nA: ")
}

pub fn standard_claim_block(claim: &str, scheme: &LabelScheme) -> String {
    format!("Q: Among {}, the claim \"{claim}\" is classified as\nA: ", scheme.spelled_out())
}

pub fn cot_claim_block(claim: &str, scheme: &LabelScheme, background: Option<&str>) -> String {
    let bg = background.map(|b| format!("Background information: {b}\n")).unwrap_or_default();
    format!("Q: Choose a label from {} for the following claim.\n{bg}Claim: \"{claim}\"\nA: ", scheme.spelled_out())
}

/// Stops match case-insensitively, so a bare "To verify" would also fire on
/// "easier to verify" in the decomposition sentence.
pub mod stops {
    pub const DECOMPOSITION: [&str; 4] = ["To verify subclaim", "To verify the claim", "Question:", "\nQ:"];
    pub const QUESTION: [&str; 4] =
        ["Tell me if you are confident", "To verify subclaim", "Based on the answers", "\nQ:"];
    pub const CONFIDENCE: [&str; 1] = ["no"];
    pub const ANSWER: [&str; 1] = ["\n"];
    pub const FINAL: [&str; 2] = ["\n\n", "\nQ:"];
}
