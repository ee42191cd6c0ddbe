use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{error, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use hiss_core::backend::{HttpBackend, LlmBackend, RetryPolicy, Retrying};
use hiss_core::datasets::{import_jsonl, load_liar, load_rawfc, select_demos, Split};
use hiss_core::eval::{emit_report, paired_permutation_test, EvalReport, ReportFormat};
use hiss_core::protocol::{DemoSet, DemoStyle, RunConfig};
use hiss_core::search::{export_cache, import_cache, HttpSearchEngine, SearchEngine};
use hiss_core::{
    Claim, Label, LabelScheme, Method, ProtocolError, RunSummary, Runner, ScriptedBackend, SearchCache, SearchPolicy,
    SearchService, VerificationTrace,
};

use crate::config::{resolve_scheme, CacheAction, Cli, Command, DataArgs, DemosAction, FileConfig, RunArgs, Settings};
use crate::{Failure, EXIT_INFRA, EXIT_OK, EXIT_PARSE};

pub fn run(cli: Cli) -> Result<u8> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Verify { claim, id, run, out } => verify(&claim, &id, &run, out.as_deref(), &file),
        Command::Batch { data, run, out, predictions, resume } => {
            let predictions = predictions.unwrap_or_else(|| predictions_path(&out));
            batch(&data, &run, &out, &predictions, resume, &file)
        }
        Command::Eval { data, scheme, predictions, baseline, permutations, seed, format, out } => {
            let scheme = resolve_scheme(scheme.as_deref(), Some(&data), &file)?;
            let format = report_format(format.as_deref(), &file)?;
            let seed = seed.or(file.seed).unwrap_or(0);
            let text = eval(&data, &scheme, &predictions, baseline.as_deref(), permutations, seed, format, &file)?;
            write_or_print(&text, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Ablate { data, run, grid, out, format } => {
            let format = report_format(format.as_deref(), &file)?;
            ablate(&data, &run, &grid, &out, format, &file)
        }
        Command::Cache { action } => cache(action),
        Command::Demos { action } => demos(action, &file),
    }
}

fn predictions_path(traces: &Path) -> PathBuf {
    let name = traces.file_name().and_then(|n| n.to_str()).unwrap_or("traces.jsonl");
    let stem = name.strip_suffix(".jsonl").unwrap_or(name);
    traces.with_file_name(format!("{stem}.predictions.jsonl"))
}

fn report_format(flag: Option<&str>, file: &FileConfig) -> Result<ReportFormat> {
    let name = flag.or(file.format.as_deref()).unwrap_or("text");
    name.parse().map_err(|e: String| Failure::new("invalid_config", EXIT_INFRA, e).into())
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A scripted fixture or the HTTP backend. Scripted state is reset for
/// every run so ablation configurations replay independently.
enum Backend {
    Scripted(ScriptedBackend),
    Live(Retrying<HttpBackend>),
}

impl Backend {
    fn open(settings: &Settings) -> Result<Self> {
        match &settings.fixture {
            Some(path) => ScriptedBackend::load(path)
                .map(Backend::Scripted)
                .map_err(|e| Failure::new("backend_error", EXIT_INFRA, format!("{}: {e}", path.display())).into()),
            None => {
                let http = HttpBackend::from_env(settings.llm.clone())
                    .map_err(|e| Failure::new("backend_unavailable", EXIT_INFRA, e.to_string()))?;
                Ok(Backend::Live(Retrying::new(http, RetryPolicy::default())))
            }
        }
    }

    fn with<R>(&self, f: impl FnOnce(&dyn LlmBackend) -> R) -> R {
        match self {
            Backend::Scripted(b) => f(&b.fresh()),
            Backend::Live(b) => f(b),
        }
    }
}

fn open_search(settings: &Settings) -> Result<SearchService> {
    let cache = match &settings.cache {
        Some(path) if path.exists() => import_cache(path)
            .map_err(|e| Failure::new("search_error", EXIT_INFRA, format!("{}: {e}", path.display())))?,
        _ => SearchCache::new(),
    };
    if settings.freeze_cache {
        return Ok(SearchService::offline(cache));
    }
    let engine: Option<Box<dyn SearchEngine>> = match HttpSearchEngine::from_env(settings.search.clone()) {
        Ok(engine) => Some(Box::new(engine)),
        Err(e) => {
            warn!("live search disabled: {e}; cache misses will fail");
            None
        }
    };
    Ok(SearchService::new(cache, engine))
}

fn save_search(settings: &Settings, search: &SearchService) -> Result<()> {
    if settings.freeze_cache || search.live_calls() == 0 {
        return Ok(());
    }
    if let Some(path) = &settings.cache {
        export_cache(&search.snapshot(), path).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        info!("wrote {} cached queries to {}", search.snapshot().len(), path.display());
    }
    Ok(())
}

fn run_config(settings: &Settings) -> Result<RunConfig> {
    let mut config = RunConfig::new(settings.scheme.clone());
    config.shot_count = settings.k;
    config.search_policy = settings.search_policy;
    config.decompose = settings.decompose;
    config.step_by_step = settings.step_by_step;
    if let Some(n) = settings.max_subclaims {
        config.max_subclaims = n;
    }
    if let Some(n) = settings.max_questions {
        config.max_questions_per_subclaim = n;
    }
    config.validate().map_err(Failure::from)?;
    Ok(config)
}

fn demo_set(settings: &Settings) -> Result<DemoSet> {
    match &settings.demos {
        Some(path) => Ok(DemoSet::load(path).map_err(Failure::from)?),
        None => DemoSet::builtin(settings.scheme.name(), DemoStyle::for_method(settings.method)).ok_or_else(|| {
            Failure::new(
                "invalid_config",
                EXIT_INFRA,
                format!("no built-in demonstrations for scheme `{}`", settings.scheme.name()),
            )
            .into()
        }),
    }
}

fn load_claims(data: &DataArgs, scheme: &LabelScheme, file: &FileConfig, default_split: Split) -> Result<Vec<Claim>> {
    let kind = data.dataset.as_deref().or(file.dataset.as_deref()).unwrap_or("jsonl");
    let path = data
        .data
        .as_ref()
        .or(file.data.as_ref())
        .ok_or_else(|| Failure::new("invalid_config", EXIT_INFRA, "--data is required"))?;
    let split = match data.split.as_deref().or(file.split.as_deref()) {
        Some(s) => s.parse().map_err(|e| Failure::new("invalid_config", EXIT_INFRA, format!("{e}")))?,
        None => default_split,
    };
    let claims = match kind {
        "liar" => load_liar(path, split),
        "rawfc" => load_rawfc(path, split),
        "jsonl" => import_jsonl(path, scheme),
        other => bail!(Failure::new("invalid_config", EXIT_INFRA, format!("unknown dataset `{other}`"))),
    }
    .map_err(|e| Failure::new("dataset_error", EXIT_INFRA, e.to_string()))?;
    Ok(claims)
}

fn verify(text: &str, id: &str, run: &RunArgs, out: Option<&Path>, file: &FileConfig) -> Result<u8> {
    let settings = Settings::resolve(run, None, file)?;
    let config = run_config(&settings)?;
    let demos = demo_set(&settings)?;
    let backend = Backend::open(&settings)?;
    let search = open_search(&settings)?;
    let claim = Claim::new(id, text);
    let result = backend.with(|b| Runner::new(settings.method, config, demos, b, &search).run_claim(&claim));
    save_search(&settings, &search)?;
    let trace = result.map_err(Failure::from)?;
    let mut json = serde_json::to_string_pretty(&trace)?;
    json.push('\n');
    write_or_print(&json, out)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, Deserialize)]
struct Prediction {
    id: String,
    label: Option<String>,
}

/// Ids of complete trace lines. A torn last line from an interrupted run
/// is dropped and the file rewritten without it.
fn completed_ids(traces: &Path, predictions: &Path) -> Result<BTreeSet<String>> {
    let mut kept = Vec::new();
    let mut ids = BTreeSet::new();
    if traces.exists() {
        let reader = BufReader::new(File::open(traces).with_context(|| format!("reading {}", traces.display()))?);
        for line in reader.lines() {
            let line = line?;
            match serde_json::from_str::<VerificationTrace>(&line) {
                Ok(t) => {
                    ids.insert(t.claim.id.clone());
                    kept.push(line);
                }
                Err(_) => warn!("dropping unreadable trace line in {}", traces.display()),
            }
        }
    }
    rewrite_lines(traces, &kept)?;
    let mut preds = Vec::new();
    if predictions.exists() {
        for line in fs::read_to_string(predictions)?.lines() {
            if let Ok(p) = serde_json::from_str::<Prediction>(line) {
                if ids.contains(&p.id) {
                    preds.push(line.to_string());
                }
            }
        }
    }
    rewrite_lines(predictions, &preds)?;
    Ok(ids)
}

fn rewrite_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn open_output(path: &Path, append: bool) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))
}

struct BatchOutcome {
    summary: RunSummary,
    predictions: BTreeMap<String, Option<Label>>,
    infra_failures: usize,
}

impl BatchOutcome {
    fn exit_code(&self) -> u8 {
        if self.infra_failures > 0 {
            EXIT_INFRA
        } else if self.summary.failures > 0 {
            EXIT_PARSE
        } else {
            EXIT_OK
        }
    }
}

/// Infrastructure failures outrank parse failures.
fn worse(a: u8, b: u8) -> u8 {
    if a == EXIT_INFRA || b == EXIT_INFRA {
        EXIT_INFRA
    } else {
        a.max(b)
    }
}

/// Runs `claims`, streaming each trace and prediction to disk as soon as it
/// is next in input order.
fn stream_batch(
    runner: &Runner<'_>,
    claims: &[Claim],
    jobs: usize,
    traces: &mut File,
    predictions: &mut File,
) -> Result<BatchOutcome> {
    let mut outcome = BatchOutcome { summary: RunSummary::default(), predictions: BTreeMap::new(), infra_failures: 0 };
    let mut io_error: Option<anyhow::Error> = None;
    runner.run_batch(claims, jobs, |_, claim, result| {
        let written = match result {
            Ok(trace) => {
                outcome.summary.add_trace(&trace);
                outcome.predictions.insert(claim.id.clone(), Some(trace.verdict.label.clone()));
                let pred = Prediction { id: claim.id.clone(), label: Some(trace.verdict.label.as_str().into()) };
                writeln!(traces, "{}", trace.to_json_line())
                    .and_then(|_| writeln!(predictions, "{}", serde_json::to_string(&pred).expect("serializes")))
                    .and_then(|_| traces.flush())
                    .and_then(|_| predictions.flush())
            }
            Err(e) => {
                report_claim_error(&e);
                if !e.is_parse_failure() {
                    outcome.infra_failures += 1;
                }
                outcome.summary.add_failure(&e);
                outcome.predictions.insert(claim.id.clone(), None);
                Ok(())
            }
        };
        match written {
            Ok(()) => true,
            Err(e) => {
                io_error = Some(e.into());
                false
            }
        }
    });
    match io_error {
        Some(e) => Err(e.context("writing batch output")),
        None => Ok(outcome),
    }
}

fn report_claim_error(e: &ProtocolError) {
    error!("{}", json!({ "code": e.code(), "message": e.to_string() }));
}

fn print_summary(label: Option<&str>, summary: &RunSummary, seed: u64) -> Result<()> {
    let mut value = serde_json::to_value(summary)?;
    value["seed"] = json!(seed);
    if let Some(label) = label {
        value["config"] = json!(label);
    }
    println!("{}", serde_json::to_string(&value)?);
    Ok(())
}

fn batch(data: &DataArgs, run: &RunArgs, out: &Path, preds: &Path, resume: bool, file: &FileConfig) -> Result<u8> {
    let settings = Settings::resolve(run, Some(data), file)?;
    let config = run_config(&settings)?;
    let demos = demo_set(&settings)?;
    let claims = load_claims(data, &settings.scheme, file, Split::Test)?;
    let done = if resume { completed_ids(out, preds)? } else { BTreeSet::new() };
    let todo: Vec<Claim> = claims.into_iter().filter(|c| !done.contains(&c.id)).collect();
    if resume {
        info!("resuming: {} claims already done, {} to run", done.len(), todo.len());
    }
    let backend = Backend::open(&settings)?;
    let search = open_search(&settings)?;
    let mut traces = open_output(out, resume)?;
    let mut predictions = open_output(preds, resume)?;
    let outcome = backend.with(|b| {
        let runner = Runner::new(settings.method, config, demos, b, &search);
        stream_batch(&runner, &todo, settings.jobs, &mut traces, &mut predictions)
    })?;
    save_search(&settings, &search)?;
    print_summary(None, &outcome.summary, settings.seed)?;
    Ok(outcome.exit_code())
}

/// Configuration names accepted by `ablate --grid`.
pub const GRID_ENTRIES: [&str; 5] = ["default", "no-decompose", "no-stepwise", "search=never", "search=always"];

fn apply_grid_entry(entry: &str, config: &mut RunConfig) -> Result<()> {
    match entry {
        "default" => {}
        "no-decompose" => config.decompose = false,
        "no-stepwise" => config.step_by_step = false,
        "search=never" => config.search_policy = SearchPolicy::Never,
        "search=always" => config.search_policy = SearchPolicy::Always,
        "search=self-decide" | "search=self_decide" => config.search_policy = SearchPolicy::SelfDecide,
        other => bail!(Failure::new(
            "invalid_config",
            EXIT_INFRA,
            format!("unknown grid entry `{other}` (expected one of {})", GRID_ENTRIES.join(", "))
        )),
    }
    Ok(())
}

fn gold_and_predicted(
    claims: &[Claim],
    predictions: &BTreeMap<String, Option<Label>>,
) -> Result<(Vec<Label>, Vec<Option<Label>>)> {
    let mut gold = Vec::with_capacity(claims.len());
    let mut pred = Vec::with_capacity(claims.len());
    for c in claims {
        let g = c
            .gold
            .clone()
            .ok_or_else(|| Failure::new("missing_gold", EXIT_INFRA, format!("claim {} has no gold label", c.id)))?;
        gold.push(g);
        pred.push(predictions.get(&c.id).cloned().flatten());
    }
    Ok((gold, pred))
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    }
}

fn ablate(
    data: &DataArgs,
    run: &RunArgs,
    grid: &[String],
    out: &Path,
    format: ReportFormat,
    file: &FileConfig,
) -> Result<u8> {
    let settings = Settings::resolve(run, Some(data), file)?;
    if settings.method != Method::Hiss {
        bail!(Failure::new("invalid_config", EXIT_INFRA, "ablations apply to --method hiss only"));
    }
    let base = run_config(&settings)?;
    let mut entries = vec!["default".to_string()];
    for g in grid {
        let g = g.trim();
        if !g.is_empty() && !entries.iter().any(|e| e == g) {
            entries.push(g.to_string());
        }
    }
    let mut configs = Vec::new();
    for entry in &entries {
        let mut config = base.clone();
        apply_grid_entry(entry, &mut config)?;
        configs.push((entry.clone(), config));
    }
    let demos = demo_set(&settings)?;
    let claims = load_claims(data, &settings.scheme, file, Split::Test)?;
    let backend = Backend::open(&settings)?;
    let search = open_search(&settings)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut exit = EXIT_OK;
    for (name, config) in configs {
        let stem = name.replace('=', "-");
        let mut traces = open_output(&out.join(format!("{stem}.traces.jsonl")), false)?;
        let mut predictions = open_output(&out.join(format!("{stem}.predictions.jsonl")), false)?;
        let outcome = backend.with(|b| {
            let runner = Runner::new(Method::Hiss, config, demos.clone(), b, &search);
            stream_batch(&runner, &claims, settings.jobs, &mut traces, &mut predictions)
        })?;
        let (gold, pred) = gold_and_predicted(&claims, &outcome.predictions)?;
        let report = EvalReport::new(&gold, &pred, &settings.scheme).map_err(|e| anyhow!("{e}"))?;
        let text = emit_report(&report, format);
        let path = out.join(format!("{stem}.report.{}", extension(format)));
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        if format == ReportFormat::Text {
            println!("== {name} ==");
            print!("{text}");
        }
        print_summary(Some(&name), &outcome.summary, settings.seed)?;
        exit = worse(exit, outcome.exit_code());
    }
    save_search(&settings, &search)?;
    Ok(exit)
}

fn read_predictions(
    path: &Path,
    scheme: &LabelScheme,
    gold_ids: &BTreeSet<&str>,
) -> Result<BTreeMap<String, Option<Label>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: not a prediction record", path.display(), n + 1))?;
        if !gold_ids.contains(p.id.as_str()) {
            bail!(Failure::new(
                "unknown_id",
                EXIT_INFRA,
                format!("{}:{}: unknown claim id `{}`", path.display(), n + 1, p.id)
            ));
        }
        let label = match p.label {
            Some(l) => Some(scheme.label(&l).map_err(|e| {
                Failure::new("label_not_in_scheme", EXIT_PARSE, format!("{}:{}: {e}", path.display(), n + 1))
            })?),
            None => None,
        };
        if out.insert(p.id.clone(), label).is_some() {
            bail!(Failure::new(
                "duplicate_id",
                EXIT_INFRA,
                format!("{}:{}: duplicate id `{}`", path.display(), n + 1, p.id)
            ));
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    data: &DataArgs,
    scheme: &LabelScheme,
    predictions: &Path,
    baseline: Option<&Path>,
    permutations: usize,
    seed: u64,
    format: ReportFormat,
    file: &FileConfig,
) -> Result<String> {
    let claims = load_claims(data, scheme, file, Split::Test)?;
    let ids: BTreeSet<&str> = claims.iter().map(|c| c.id.as_str()).collect();
    let preds = read_predictions(predictions, scheme, &ids)?;
    let (gold, pred) = gold_and_predicted(&claims, &preds)?;
    let report = EvalReport::new(&gold, &pred, scheme).map_err(|e| anyhow!("{e}"))?;
    let abstained: Vec<&str> =
        claims.iter().zip(&pred).filter(|(_, p)| p.is_none()).map(|(c, _)| c.id.as_str()).collect();
    let comparison = match baseline {
        Some(path) => {
            let other = read_predictions(path, scheme, &ids)?;
            let (_, b) = gold_and_predicted(&claims, &other)?;
            Some(paired_permutation_test(&gold, &pred, &b, scheme, permutations, seed).map_err(|e| anyhow!("{e}"))?)
        }
        None => None,
    };
    let mut text = match format {
        ReportFormat::Json => {
            let mut value = serde_json::to_value(&report)?;
            value["abstained_ids"] = json!(abstained);
            if let Some(c) = &comparison {
                value["comparison"] = serde_json::to_value(c)?;
            }
            let mut s = serde_json::to_string_pretty(&value)?;
            s.push('\n');
            return Ok(s);
        }
        other => emit_report(&report, other),
    };
    if format == ReportFormat::Text {
        if !abstained.is_empty() {
            text.push_str(&format!("abstained: {}\n", abstained.join(", ")));
        }
        if let Some(c) = comparison {
            text.push_str(&format!(
                "vs baseline: delta F1 {:+.1}, p = {:.4} ({} permutations, seed {seed})\n",
                c.observed_delta * 100.0,
                c.p_value,
                c.iterations
            ));
        }
    }
    Ok(text)
}

fn cache(action: CacheAction) -> Result<u8> {
    match action {
        CacheAction::Stats { path } => {
            let cache = import_cache(&path).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            let hits: usize = cache.entries().values().map(Vec::len).sum();
            let empty = cache.entries().values().filter(|h| h.is_empty()).count();
            println!("{}", json!({ "queries": cache.len(), "hits": hits, "empty_queries": empty }));
        }
        CacheAction::Merge { inputs, out } => {
            let mut merged = SearchCache::new();
            for path in &inputs {
                let cache = import_cache(path).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                for (query, hits) in cache.entries() {
                    merged.insert(query, hits.clone());
                }
            }
            export_cache(&merged, &out).map_err(|e| anyhow!("{}: {e}", out.display()))?;
            println!("{}", json!({ "queries": merged.len(), "inputs": inputs.len() }));
        }
    }
    Ok(EXIT_OK)
}

fn demos(action: DemosAction, file: &FileConfig) -> Result<u8> {
    match action {
        DemosAction::Show { scheme, method } => {
            let method: Method = method.parse().map_err(anyhow::Error::msg)?;
            let set = DemoSet::builtin(&scheme, DemoStyle::for_method(method))
                .ok_or_else(|| anyhow!("no built-in demonstrations for scheme `{scheme}`"))?;
            println!("# {}", set.id);
            println!("{}", set.demos.join("\n\n"));
        }
        DemosAction::Select { data, scheme, k, seed } => {
            let scheme = resolve_scheme(scheme.as_deref(), Some(&data), file)?;
            let seed = seed.or(file.seed).unwrap_or(0);
            let pool = load_claims(&data, &scheme, file, Split::Train)?;
            let picked =
                select_demos(&pool, k, seed).map_err(|e| Failure::new("dataset_error", EXIT_INFRA, e.to_string()))?;
            let ids: Vec<&str> = picked.iter().map(|c| c.id.as_str()).collect();
            let out = json!({ "seed": seed, "k": k, "pool": pool.len(), "ids": ids, "claims": picked });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(EXIT_OK)
}
