use crate::backend::{BackendError, CompletionRequest, CompletionResponse, FinishReason, LlmBackend};
use crate::labels::{parse_final_line, LabelParseError};
use crate::model::{
    Claim, Confidence, FingerprintInput, LabelScheme, Method, QaStep, SearchPolicy, Subclaim, SubclaimVerification,
    TraceFlag, Verdict, VerificationTrace,
};
use crate::search::SearchService;

use super::prompts::{self, stops, CONFIDENCE_PROBE, NO_SPLIT_SENTENCE};
use super::{
    detect_confidence, extract_question, parse_decomposition, Decomposition, DemoSet, Phase, ProtocolError,
    ProtocolState, RunConfig,
};

pub(crate) fn generate(
    state: &ProtocolState,
    backend: &dyn LlmBackend,
    stop_set: &[&str],
) -> Result<CompletionResponse, BackendError> {
    let request = CompletionRequest::new(state.prompt())
        .stops(stop_set.iter().copied())
        .max_tokens(state.max_tokens)
        .conversation(state.conversation.clone());
    backend.complete(&request)
}

/// `k` demos, a blank line, then `block`.
pub(crate) fn with_demos(demos: &DemoSet, k: usize, block: &str) -> Result<String, ProtocolError> {
    let prefix = demos.prefix(k)?;
    Ok(if prefix.is_empty() { block.to_string() } else { format!("{prefix}\n\n{block}") })
}

pub fn assemble_prompt(demos: &DemoSet, claim: &Claim, config: &RunConfig) -> Result<ProtocolState, ProtocolError> {
    if claim.text.trim().is_empty() {
        return Err(ProtocolError::InvalidConfig("claim text is empty".into()));
    }
    let prompt = with_demos(demos, config.shot_count, &prompts::hiss_claim_block(&claim.text))?;
    let mut state = ProtocolState::new(prompt, claim.id.clone());
    state.max_tokens = config.max_tokens;
    Ok(state)
}

/// Asks for the subclaim list, or writes the no-split sentence itself when
/// decomposition is switched off.
pub fn run_decomposition(
    state: &mut ProtocolState,
    claim: &Claim,
    backend: &dyn LlmBackend,
    config: &RunConfig,
) -> Result<Decomposition, ProtocolError> {
    if !config.decompose {
        state.append(NO_SPLIT_SENTENCE);
        state.append("\n");
        state.phase = Phase::Decomposed;
        return Ok(Decomposition {
            subclaims: vec![Subclaim { index: 1, text: claim.text.clone() }],
            no_split: true,
            collapsed: false,
        });
    }
    let reply = generate(state, backend, &stops::DECOMPOSITION)?;
    state.append(&reply.text);
    state.ensure_newline();
    let mut d = parse_decomposition(&reply.text, &claim.text)
        .ok_or_else(|| ProtocolError::UnparseableDecomposition(reply.text.clone()))?;
    if d.collapsed {
        state.flags.push(TraceFlag::DuplicateCollapsed { subclaim: 0, what: "subclaim".into() });
    }
    if d.subclaims.len() > config.max_subclaims {
        state.flags.push(TraceFlag::SubclaimCapHit { generated: d.subclaims.len() });
        d.subclaims.truncate(config.max_subclaims);
    }
    state.phase = Phase::Decomposed;
    Ok(d)
}

fn unaided_answer(state: &mut ProtocolState, backend: &dyn LlmBackend) -> Result<String, ProtocolError> {
    state.append("Answer:");
    let reply = generate(state, backend, &stops::ANSWER)?;
    state.append(&reply.text);
    state.append("\n");
    Ok(reply.text.trim().to_string())
}

fn searched_step(
    state: &mut ProtocolState,
    backend: &dyn LlmBackend,
    search: &SearchService,
    question: &str,
    confidence: Confidence,
) -> Result<QaStep, ProtocolError> {
    match search.evidence(question)? {
        Some(ev) => {
            state.append("Answer: ");
            state.append(&ev.text);
            let reply = generate(state, backend, &stops::ANSWER)?;
            state.append(&reply.text);
            state.append("\n");
            let answer = format!("{}{}", ev.text, reply.text).trim().to_string();
            Ok(QaStep { question: question.to_string(), confidence, evidence: Some(ev), answer, no_evidence: false })
        }
        None => {
            let answer = unaided_answer(state, backend)?;
            Ok(QaStep { question: question.to_string(), confidence, evidence: None, answer, no_evidence: true })
        }
    }
}

/// The model's own `Answer:` line following a "yes", if it came out whole.
fn own_answer_line<'a>(rest: Option<&'a str>, reply: &CompletionResponse) -> Option<&'a str> {
    let rest = rest?;
    let line = rest.split('\n').next()?;
    let complete = rest.contains('\n') || reply.finish_reason == FinishReason::NaturalEnd;
    let answer = line.trim_start().strip_prefix("Answer:")?;
    (complete && !answer.trim().is_empty()).then_some(line)
}

/// Runs the question loop for one subclaim. `header` is the subclaim number
/// to print, or `None` for the undivided claim.
pub fn run_subclaim_loop(
    state: &mut ProtocolState,
    subclaim: &Subclaim,
    header: Option<usize>,
    backend: &dyn LlmBackend,
    search: &SearchService,
    config: &RunConfig,
) -> Result<SubclaimVerification, ProtocolError> {
    state.phase = Phase::Questioning { subclaim: subclaim.index };
    state.ensure_newline();
    if !config.step_by_step {
        return single_search_step(state, subclaim, header, backend, search, config);
    }
    state.append(&prompts::subclaim_header(header));
    state.append("\n");

    let mut steps = Vec::new();
    loop {
        if steps.len() == config.max_questions_per_subclaim {
            state.flags.push(TraceFlag::QuestionCapHit { subclaim: subclaim.index });
            break;
        }
        let reply = generate(state, backend, &stops::QUESTION)?;
        state.append(&reply.text);
        let Some((question, collapsed)) = extract_question(&reply.text) else {
            state.tail = reply.text;
            break;
        };
        if collapsed {
            state.flags.push(TraceFlag::DuplicateCollapsed { subclaim: subclaim.index, what: "question".into() });
        }
        if !state.prompt().ends_with(char::is_whitespace) {
            state.append(" ");
        }
        state.append(CONFIDENCE_PROBE);
        let probe = generate(state, backend, &stops::CONFIDENCE)?;
        let (confidence, ambiguous) = detect_confidence(&probe);
        if ambiguous {
            state.flags.push(TraceFlag::AmbiguousConfidence {
                subclaim: subclaim.index,
                step: steps.len() + 1,
                reply: probe.text.clone(),
            });
        }
        let step = match confidence {
            Confidence::NotConfident => {
                state.append(if probe.text.is_empty() { " " } else { &probe.text });
                state.append("No.\n");
                if config.search_policy == SearchPolicy::Never {
                    let answer = unaided_answer(state, backend)?;
                    QaStep { question, confidence, evidence: None, answer, no_evidence: false }
                } else {
                    searched_step(state, backend, search, &question, confidence)?
                }
            }
            Confidence::Confident => {
                let mut parts = probe.text.splitn(2, '\n');
                let first = parts.next().unwrap_or_default();
                let rest = parts.next();
                state.append(first);
                state.append("\n");
                if config.search_policy == SearchPolicy::Always {
                    searched_step(state, backend, search, &question, confidence)?
                } else if let Some(line) = own_answer_line(rest, &probe) {
                    state.append(line);
                    state.append("\n");
                    let answer = line.trim_start()["Answer:".len()..].trim().to_string();
                    QaStep { question, confidence, evidence: None, answer, no_evidence: false }
                } else {
                    let answer = unaided_answer(state, backend)?;
                    QaStep { question, confidence, evidence: None, answer, no_evidence: false }
                }
            }
        };
        steps.push(step);
    }
    Ok(SubclaimVerification { subclaim: subclaim.clone(), steps })
}

/// Without step-by-step questioning each subclaim gets one lookup: the
/// subclaim itself is the query.
fn single_search_step(
    state: &mut ProtocolState,
    subclaim: &Subclaim,
    header: Option<usize>,
    backend: &dyn LlmBackend,
    search: &SearchService,
    config: &RunConfig,
) -> Result<SubclaimVerification, ProtocolError> {
    state.append(&prompts::search_header(header));
    state.append("\n");
    state.append(&format!("Question: {}\n", subclaim.text));
    let step = if config.search_policy == SearchPolicy::Never {
        let answer = unaided_answer(state, backend)?;
        QaStep {
            question: subclaim.text.clone(),
            confidence: Confidence::Confident,
            evidence: None,
            answer,
            no_evidence: false,
        }
    } else {
        searched_step(state, backend, search, &subclaim.text, Confidence::NotConfident)?
    };
    Ok(SubclaimVerification { subclaim: subclaim.clone(), steps: vec![step] })
}

/// Generates the closing line and reads the label from it. If the model
/// produces no such line, the line's opening is written into the prompt and
/// the model completes it.
pub fn run_final_prediction(
    state: &mut ProtocolState,
    backend: &dyn LlmBackend,
    scheme: &LabelScheme,
) -> Result<Verdict, ProtocolError> {
    let reply = generate(state, backend, &stops::FINAL)?;
    state.append(&reply.text);
    let produced = format!("{}{}", std::mem::take(&mut state.tail), reply.text);
    let verdict = match parse_final_line(&produced, scheme) {
        Ok(v) => v,
        Err(LabelParseError::NoFinalLine) => {
            state.ensure_newline();
            let prefix = prompts::final_prefix(scheme);
            state.append(&prefix);
            let reply = generate(state, backend, &stops::ANSWER)?;
            state.append(&reply.text);
            state.flags.push(TraceFlag::FinalLineElicited);
            parse_final_line(&format!("{prefix}{}", reply.text), scheme)?
        }
        Err(e) => return Err(e.into()),
    };
    state.phase = Phase::Predicted;
    Ok(verdict)
}

pub fn run_hiss(
    claim: &Claim,
    config: &RunConfig,
    demos: &DemoSet,
    backend: &dyn LlmBackend,
    search: &SearchService,
) -> Result<VerificationTrace, ProtocolError> {
    hiss_inner(claim, config, demos, backend, search).map_err(|e| e.for_claim(&claim.id))
}

fn hiss_inner(
    claim: &Claim,
    config: &RunConfig,
    demos: &DemoSet,
    backend: &dyn LlmBackend,
    search: &SearchService,
) -> Result<VerificationTrace, ProtocolError> {
    config.validate()?;
    let mut state = assemble_prompt(demos, claim, config)?;
    let decomposition = run_decomposition(&mut state, claim, backend, config)?;
    let mut subclaims = Vec::new();
    for sub in &decomposition.subclaims {
        let header = (!decomposition.no_split).then_some(sub.index);
        subclaims.push(run_subclaim_loop(&mut state, sub, header, backend, search, config)?);
    }
    let verdict = run_final_prediction(&mut state, backend, &config.scheme)?;
    let backend_id = backend.id();
    let config_fingerprint = FingerprintInput {
        method: Method::Hiss,
        scheme: &config.scheme,
        shot_count: config.shot_count,
        search_policy: config.search_policy,
        decompose: config.decompose,
        step_by_step: config.step_by_step,
        backend_id: &backend_id,
        prompt_asset: &demos.id,
    }
    .digest();
    let flags = std::mem::take(&mut state.flags);
    Ok(VerificationTrace {
        claim: claim.clone(),
        method: Method::Hiss,
        scheme: config.scheme.clone(),
        search_policy: config.search_policy,
        decompose: config.decompose,
        step_by_step: config.step_by_step,
        shot_count: config.shot_count,
        subclaims,
        verdict,
        reasoning: None,
        flags,
        config_fingerprint,
        transcript: state.into_transcript(),
    })
}
