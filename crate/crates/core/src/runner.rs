//! Runs any method over many claims: one trace per claim, results delivered
//! in input order while workers run ahead.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backend::LlmBackend;
use crate::baselines::{run_search_cot, run_standard, run_vanilla_cot, BaselineRun};
use crate::model::{Claim, Confidence, FingerprintInput, Method, SearchPolicy, VerificationTrace};
use crate::protocol::{run_hiss, DemoSet, ProtocolError, RunConfig};
use crate::search::SearchService;

pub struct Runner<'a> {
    pub method: Method,
    pub config: RunConfig,
    pub demos: DemoSet,
    pub backend: &'a dyn LlmBackend,
    pub search: &'a SearchService,
}

impl<'a> Runner<'a> {
    pub fn new(
        method: Method,
        config: RunConfig,
        demos: DemoSet,
        backend: &'a dyn LlmBackend,
        search: &'a SearchService,
    ) -> Self {
        Runner { method, config, demos, backend, search }
    }

    /// Search policy as actually exercised by the method.
    fn effective_policy(&self) -> SearchPolicy {
        match self.method {
            Method::Hiss => self.config.search_policy,
            Method::Standard | Method::VanillaCot => SearchPolicy::Never,
            Method::SearchCot => SearchPolicy::Always,
        }
    }

    pub fn fingerprint(&self) -> String {
        let hiss = self.method == Method::Hiss;
        FingerprintInput {
            method: self.method,
            scheme: &self.config.scheme,
            shot_count: self.config.shot_count,
            search_policy: self.effective_policy(),
            decompose: hiss && self.config.decompose,
            step_by_step: hiss && self.config.step_by_step,
            backend_id: &self.backend.id(),
            prompt_asset: &self.demos.id,
        }
        .digest()
    }

    pub fn run_claim(&self, claim: &Claim) -> Result<VerificationTrace, ProtocolError> {
        let c = &self.config;
        let baseline = match self.method {
            Method::Hiss => return run_hiss(claim, c, &self.demos, self.backend, self.search),
            Method::Standard => run_standard(claim, &c.scheme, &self.demos, c.shot_count, c.max_tokens, self.backend)?,
            Method::VanillaCot => {
                run_vanilla_cot(claim, &c.scheme, &self.demos, c.shot_count, c.max_tokens, self.backend)?
            }
            Method::SearchCot => {
                run_search_cot(claim, &c.scheme, &self.demos, c.shot_count, c.max_tokens, self.backend, self.search)?
            }
        };
        Ok(self.baseline_trace(claim, baseline))
    }

    fn baseline_trace(&self, claim: &Claim, run: BaselineRun) -> VerificationTrace {
        VerificationTrace {
            claim: claim.clone(),
            method: self.method,
            scheme: self.config.scheme.clone(),
            search_policy: self.effective_policy(),
            decompose: false,
            step_by_step: false,
            shot_count: self.config.shot_count,
            subclaims: Vec::new(),
            verdict: run.verdict,
            reasoning: run.reasoning,
            flags: run.flags,
            config_fingerprint: self.fingerprint(),
            transcript: run.transcript,
        }
    }

    /// Runs `claims` on `jobs` worker threads and hands each result to `sink`
    /// in input order. Stops handing out new claims once `sink` returns
    /// `false`.
    pub fn run_batch<F>(&self, claims: &[Claim], jobs: usize, mut sink: F)
    where
        F: FnMut(usize, &Claim, Result<VerificationTrace, ProtocolError>) -> bool,
    {
        let next = AtomicUsize::new(0);
        let cancelled = AtomicUsize::new(claims.len());
        let (tx, rx) = mpsc::channel();
        thread::scope(|s| {
            for _ in 0..jobs.max(1).min(claims.len().max(1)) {
                let tx = tx.clone();
                let next = &next;
                let cancelled = &cancelled;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= claims.len() || i >= cancelled.load(Ordering::SeqCst) {
                        break;
                    }
                    if tx.send((i, self.run_claim(&claims[i]))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let mut pending = BTreeMap::new();
            let mut emit = 0usize;
            let mut open = true;
            for (i, result) in rx {
                pending.insert(i, result);
                while let Some(result) = pending.remove(&emit) {
                    if open && !sink(emit, &claims[emit], result) {
                        open = false;
                        cancelled.store(emit + 1, Ordering::SeqCst);
                    }
                    emit += 1;
                }
            }
        });
    }
}

/// Counters over a set of traces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub claims: usize,
    pub failures: usize,
    pub parse_failures: usize,
    pub subclaims: usize,
    pub questions: usize,
    pub confident: usize,
    pub not_confident: usize,
    pub searches: usize,
    pub searches_without_evidence: usize,
    pub flags: usize,
}

impl RunSummary {
    pub fn add_trace(&mut self, trace: &VerificationTrace) {
        self.claims += 1;
        self.subclaims += trace.subclaims.len();
        for step in trace.steps() {
            self.questions += 1;
            match step.confidence {
                Confidence::Confident => self.confident += 1,
                Confidence::NotConfident => self.not_confident += 1,
            }
            if step.searched() {
                self.searches += 1;
            }
            if step.no_evidence {
                self.searches_without_evidence += 1;
            }
        }
        self.flags += trace.flags.len();
    }

    pub fn add_failure(&mut self, error: &ProtocolError) {
        self.claims += 1;
        self.failures += 1;
        if error.is_parse_failure() {
            self.parse_failures += 1;
        }
    }
}
