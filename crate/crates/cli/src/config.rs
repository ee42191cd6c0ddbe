//! Command-line flags and the optional TOML config file they override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use hiss_core::backend::HttpBackendConfig;
use hiss_core::search::HttpSearchConfig;
use hiss_core::{LabelScheme, Method, SearchPolicy};

#[derive(Debug, Parser)]
#[command(name = "hiss", version, about = "Verify news claims by decomposing them into subclaims and questioning each")]
pub struct Cli {
    /// TOML file with defaults for any flag below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify one claim and print its trace as JSON.
    Verify {
        claim: String,
        #[arg(long, default_value = "claim")]
        id: String,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify every claim of a dataset split.
    Batch {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Trace file, one JSON trace per line.
        #[arg(long, default_value = "traces.jsonl")]
        out: PathBuf,
        /// Prediction file; defaults to the trace file with a `.predictions.jsonl` suffix.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Skip claims whose ids already appear in the trace file.
        #[arg(long)]
        resume: bool,
    },
    /// Score a prediction file against gold labels.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        predictions: PathBuf,
        /// Second prediction file to compare against with a permutation test.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        permutations: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// text, json, or csv.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the default configuration plus ablations and report each.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of no-decompose, no-stepwise, search=never, search=always.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<String>,
        /// Directory for per-configuration traces and reports.
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Inspect or combine search cache files.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Show built-in demonstrations or sample new ones from a training split.
    Demos {
        #[command(subcommand)]
        action: DemosAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Print the number of cached queries and hits.
    Stats { path: PathBuf },
    /// Merge cache files; later files win on conflicting queries.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DemosAction {
    /// Print a built-in demonstration set.
    Show {
        #[arg(long, default_value = "rawfc")]
        scheme: String,
        #[arg(long, default_value = "hiss")]
        method: String,
    },
    /// Sample demonstration claims from a dataset split, recording ids and seed.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// liar, rawfc, or jsonl.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Dataset directory (liar, rawfc) or file (jsonl).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub search_policy: Option<String>,
    #[arg(long)]
    pub no_decompose: bool,
    #[arg(long)]
    pub no_stepwise: bool,
    /// Scripted backend fixture; replaces the HTTP backend.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Search cache file, read if present and written back unless frozen.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Never search live; a cache miss fails the claim.
    #[arg(long)]
    pub freeze_cache: bool,
    /// Demonstration file replacing the built-in set.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_subclaims: Option<usize>,
    #[arg(long)]
    pub max_questions: Option<usize>,
}

/// Contents of `--config`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<String>,
    pub data: Option<PathBuf>,
    pub split: Option<String>,
    pub scheme: Option<String>,
    pub method: Option<String>,
    pub k: Option<usize>,
    pub search_policy: Option<String>,
    pub decompose: Option<bool>,
    pub step_by_step: Option<bool>,
    pub fixture: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub freeze_cache: Option<bool>,
    pub demos: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub max_subclaims: Option<usize>,
    pub max_questions: Option<usize>,
    pub format: Option<String>,
    #[serde(default)]
    pub llm: HttpBackendConfig,
    #[serde(default)]
    pub search: HttpSearchConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags merged over the config file, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scheme: LabelScheme,
    pub method: Method,
    pub k: usize,
    pub search_policy: SearchPolicy,
    pub decompose: bool,
    pub step_by_step: bool,
    pub fixture: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub freeze_cache: bool,
    pub demos: Option<PathBuf>,
    pub jobs: usize,
    pub seed: u64,
    pub max_subclaims: Option<usize>,
    pub max_questions: Option<usize>,
    pub llm: HttpBackendConfig,
    pub search: HttpSearchConfig,
}

pub fn scheme_named(name: &str) -> Result<LabelScheme> {
    match LabelScheme::by_name(name) {
        Some(s) => Ok(s),
        None => bail!("unknown label scheme `{name}` (expected liar or rawfc)"),
    }
}

/// Explicit scheme, else the config file's, else the one implied by the
/// dataset name, else RAWFC.
pub fn resolve_scheme(explicit: Option<&str>, data: Option<&DataArgs>, file: &FileConfig) -> Result<LabelScheme> {
    let dataset = data.and_then(|d| d.dataset.clone()).or_else(|| file.dataset.clone());
    let name = explicit
        .map(str::to_string)
        .or_else(|| file.scheme.clone())
        .or_else(|| dataset.filter(|d| d == "liar" || d == "rawfc"))
        .unwrap_or_else(|| "rawfc".into());
    scheme_named(&name)
}

impl Settings {
    pub fn resolve(run: &RunArgs, data: Option<&DataArgs>, file: &FileConfig) -> Result<Self> {
        let method = run.method.clone().or_else(|| file.method.clone()).unwrap_or_else(|| "hiss".into());
        let policy =
            run.search_policy.clone().or_else(|| file.search_policy.clone()).unwrap_or_else(|| "self-decide".into());
        Ok(Settings {
            scheme: resolve_scheme(run.scheme.as_deref(), data, file)?,
            method: method.parse().map_err(anyhow::Error::msg)?,
            k: run.k.or(file.k).unwrap_or(hiss_core::protocol::DEFAULT_SHOT_COUNT),
            search_policy: policy.parse().map_err(anyhow::Error::msg)?,
            decompose: !run.no_decompose && file.decompose.unwrap_or(true),
            step_by_step: !run.no_stepwise && file.step_by_step.unwrap_or(true),
            fixture: run.fixture.clone().or_else(|| file.fixture.clone()),
            cache: run.cache.clone().or_else(|| file.cache.clone()),
            freeze_cache: run.freeze_cache || file.freeze_cache.unwrap_or(false),
            demos: run.demos.clone().or_else(|| file.demos.clone()),
            jobs: run.jobs.or(file.jobs).unwrap_or(1).max(1),
            seed: run.seed.or(file.seed).unwrap_or(0),
            max_subclaims: run.max_subclaims.or(file.max_subclaims),
            max_questions: run.max_questions.or(file.max_questions),
            llm: file.llm.clone(),
            search: file.search.clone(),
        })
    }
}
