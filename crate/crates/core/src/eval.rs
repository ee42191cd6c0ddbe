//! Macro-averaged precision, recall and F1, with a paired permutation test
//! for comparing two systems on the same claims.
//!
//! Macro F1 is the harmonic mean of macro precision and macro recall, the
//! convention the published numbers follow. A missing prediction counts as a
//! miss for the gold class and as nobody's false positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Label, LabelScheme};

pub const MIN_PERMUTATIONS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("gold and prediction lists differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("`{0}` is not a label of the scheme")]
    UnknownLabel(String),
    #[error("at least {MIN_PERMUTATIONS} permutations are required, got {0}")]
    TooFewIterations(usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Rows are gold labels, columns predictions, both in scheme order. The
/// last column counts abstentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn abstentions(&self) -> usize {
        let k = self.labels.len();
        self.counts.iter().map(|r| r[k]).sum()
    }
}

pub fn confusion(gold: &[Label], pred: &[Option<Label>], scheme: &LabelScheme) -> Result<Confusion, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let k = scheme.len();
    let mut counts = vec![vec![0usize; k + 1]; k];
    let index = |l: &Label| scheme.index_of(l).ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
    for (g, p) in gold.iter().zip(pred) {
        let row = index(g)?;
        let col = match p {
            Some(p) => index(p)?,
            None => k,
        };
        counts[row][col] += 1;
    }
    Ok(Confusion { labels: scheme.labels().to_vec(), counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn macro_metrics(c: &Confusion) -> MacroMetrics {
    let k = c.labels.len();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let tp = c.counts[i][i];
            let predicted: usize = (0..k).map(|r| c.counts[r][i]).sum();
            let support: usize = c.counts[i].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics { label: c.labels[i].clone(), precision, recall, f1: harmonic(precision, recall), support }
        })
        .collect();
    let precision = per_class.iter().map(|m| m.precision).sum::<f64>() / k as f64;
    let recall = per_class.iter().map(|m| m.recall).sum::<f64>() / k as f64;
    MacroMetrics { precision, recall, f1: harmonic(precision, recall), per_class }
}

pub fn score(gold: &[Label], pred: &[Option<Label>], scheme: &LabelScheme) -> Result<MacroMetrics, EvalError> {
    Ok(macro_metrics(&confusion(gold, pred, scheme)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Macro F1 of system A minus that of system B.
    pub observed_delta: f64,
    pub p_value: f64,
    pub iterations: usize,
}

/// Two-sided paired permutation test on the macro-F1 difference. Each
/// iteration swaps the two systems' predictions on a random subset of
/// claims. The p-value is `(hits + 1) / (iterations + 1)`.
pub fn paired_permutation_test(
    gold: &[Label],
    a: &[Option<Label>],
    b: &[Option<Label>],
    scheme: &LabelScheme,
    iterations: usize,
    seed: u64,
) -> Result<PermutationResult, EvalError> {
    if iterations < MIN_PERMUTATIONS {
        return Err(EvalError::TooFewIterations(iterations));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    if a.len() != gold.len() || b.len() != gold.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: a.len().min(b.len()) });
    }
    let observed = score(gold, a, scheme)?.f1 - score(gold, b, scheme)?.f1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut pa = a.to_vec();
    let mut pb = b.to_vec();
    for _ in 0..iterations {
        for i in 0..gold.len() {
            let swap = rng.random::<bool>();
            let (x, y) = if swap { (&b[i], &a[i]) } else { (&a[i], &b[i]) };
            pa[i].clone_from(x);
            pb[i].clone_from(y);
        }
        let delta = score(gold, &pa, scheme)?.f1 - score(gold, &pb, scheme)?.f1;
        if delta.abs() >= observed.abs() - 1e-12 {
            hits += 1;
        }
    }
    Ok(PermutationResult { observed_delta: observed, p_value: (hits + 1) as f64 / (iterations + 1) as f64, iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub n: usize,
    pub abstentions: usize,
    pub metrics: MacroMetrics,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn new(gold: &[Label], pred: &[Option<Label>], scheme: &LabelScheme) -> Result<Self, EvalError> {
        let confusion = confusion(gold, pred, scheme)?;
        Ok(EvalReport {
            scheme: scheme.name().to_string(),
            n: gold.len(),
            abstentions: confusion.abstentions(),
            metrics: macro_metrics(&confusion),
            confusion,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Renders a report. Text and CSV show percentages with one decimal.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    let m = &report.metrics;
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("label,precision,recall,f1,support\n");
            for c in &m.per_class {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.label,
                    pct(c.precision),
                    pct(c.recall),
                    pct(c.f1),
                    c.support
                ));
            }
            s.push_str(&format!("macro,{},{},{},{}\n", pct(m.precision), pct(m.recall), pct(m.f1), report.n));
            s
        }
        ReportFormat::Text => {
            let mut s = format!(
                "{} claims ({} scheme, {} without a label)\nP {}  R {}  F1 {}\n",
                report.n,
                report.scheme,
                report.abstentions,
                pct(m.precision),
                pct(m.recall),
                pct(m.f1)
            );
            for c in &m.per_class {
                s.push_str(&format!(
                    "  {:<12} P {:>5}  R {:>5}  F1 {:>5}  n={}\n",
                    c.label,
                    pct(c.precision),
                    pct(c.recall),
                    pct(c.f1),
                    c.support
                ));
            }
            s
        }
    }
}

pub fn write_report(report: &EvalReport, format: ReportFormat, path: &std::path::Path) -> Result<(), EvalError> {
    std::fs::write(path, emit_report(report, format))
        .map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })
}
