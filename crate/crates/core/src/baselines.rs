//! Single-call prompting baselines: direct label, chain of thought, and chain
//! of thought with one retrieved background snippet.

use crate::backend::LlmBackend;
use crate::labels::{parse_final_line, parse_label_fragment};
use crate::model::{Claim, LabelScheme, TraceFlag, Verdict};
use crate::protocol::prompts;
use crate::protocol::{DemoSet, ProtocolError, ProtocolState};
use crate::search::SearchService;

const COT_STOPS: [&str; 1] = ["\nQ:"];
const STANDARD_STOPS: [&str; 1] = ["\n"];
const THUS_CLAUSE: &str = "thus the claim is classified as";

/// What a baseline produced for one claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineRun {
    pub verdict: Verdict,
    pub reasoning: Option<String>,
    pub flags: Vec<TraceFlag>,
    pub transcript: String,
}

fn state_for(
    demos: &DemoSet,
    k: usize,
    block: &str,
    claim: &Claim,
    max_tokens: u32,
) -> Result<ProtocolState, ProtocolError> {
    if claim.text.trim().is_empty() {
        return Err(ProtocolError::InvalidConfig("claim text is empty".into()));
    }
    let mut state = ProtocolState::new(crate::protocol::with_demos(demos, k, block)?, claim.id.clone());
    state.max_tokens = max_tokens;
    Ok(state)
}

pub fn run_standard(
    claim: &Claim,
    scheme: &LabelScheme,
    demos: &DemoSet,
    k: usize,
    max_tokens: u32,
    backend: &dyn LlmBackend,
) -> Result<BaselineRun, ProtocolError> {
    let inner = || {
        let block = prompts::standard_claim_block(&claim.text, scheme);
        let mut state = state_for(demos, k, &block, claim, max_tokens)?;
        let reply = crate::protocol::generate(&state, backend, &STANDARD_STOPS)?;
        state.append(&reply.text);
        let label = parse_label_fragment(&reply.text, scheme)?;
        let question = block.lines().next().unwrap_or_default();
        let raw_line = format!("{question} {}", reply.text.trim());
        Ok(BaselineRun {
            verdict: Verdict { label, raw_line },
            reasoning: None,
            flags: Vec::new(),
            transcript: state.into_transcript(),
        })
    };
    inner().map_err(|e: ProtocolError| e.for_claim(&claim.id))
}

fn cot_call(
    claim: &Claim,
    scheme: &LabelScheme,
    demos: &DemoSet,
    k: usize,
    max_tokens: u32,
    background: Option<&str>,
    backend: &dyn LlmBackend,
) -> Result<BaselineRun, ProtocolError> {
    let block = prompts::cot_claim_block(&claim.text, scheme, background);
    let mut state = state_for(demos, k, &block, claim, max_tokens)?;
    let reply = crate::protocol::generate(&state, backend, &COT_STOPS)?;
    state.append(&reply.text);
    let verdict = parse_final_line(&reply.text, scheme)?;
    let lower = reply.text.to_ascii_lowercase();
    let chain_end = lower.rfind(THUS_CLAUSE).unwrap_or_else(|| {
        // No "Thus" clause: the chain is everything before the label line.
        lower.rfind(&verdict.raw_line.to_ascii_lowercase()).unwrap_or(0)
    });
    let chain = reply.text[..chain_end].trim().to_string();
    Ok(BaselineRun { verdict, reasoning: Some(chain), flags: Vec::new(), transcript: state.into_transcript() })
}

pub fn run_vanilla_cot(
    claim: &Claim,
    scheme: &LabelScheme,
    demos: &DemoSet,
    k: usize,
    max_tokens: u32,
    backend: &dyn LlmBackend,
) -> Result<BaselineRun, ProtocolError> {
    cot_call(claim, scheme, demos, k, max_tokens, None, backend).map_err(|e| e.for_claim(&claim.id))
}

/// Chain of thought with the top snippet for the claim text placed before
/// the claim. Without a usable snippet it runs as plain CoT and says so.
pub fn run_search_cot(
    claim: &Claim,
    scheme: &LabelScheme,
    demos: &DemoSet,
    k: usize,
    max_tokens: u32,
    backend: &dyn LlmBackend,
    search: &SearchService,
) -> Result<BaselineRun, ProtocolError> {
    let inner = || {
        let evidence = search.evidence(&claim.text)?;
        let mut run =
            cot_call(claim, scheme, demos, k, max_tokens, evidence.as_ref().map(|e| e.text.as_str()), backend)?;
        if evidence.is_none() {
            run.flags.push(TraceFlag::NoBackground);
        }
        Ok(run)
    };
    inner().map_err(|e: ProtocolError| e.for_claim(&claim.id))
}
