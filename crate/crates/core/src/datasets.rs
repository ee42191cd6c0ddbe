//! Loaders for the LIAR and RAWFC benchmark layouts, a JSONL interchange
//! format, and seeded demonstration sampling.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::model::{Claim, LabelScheme, SchemeError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}:{line}: {source}")]
    Label { path: String, line: usize, source: SchemeError },
    #[error("unknown split `{0}` (expected train, val or test)")]
    UnknownSplit(String),
    #[error("asked for {requested} demonstrations from a pool of {available}")]
    PoolTooSmall { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::UnknownSplit(other.to_string())),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

const LIAR_METADATA: [&str; 11] = [
    "subject",
    "speaker",
    "speaker_job",
    "state",
    "party",
    "barely_true_count",
    "false_count",
    "half_true_count",
    "mostly_true_count",
    "pants_fire_count",
    "context",
];

fn liar_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train.tsv",
        Split::Val => "valid.tsv",
        Split::Test => "test.tsv",
    }
}

/// Reads one LIAR TSV file: id, label, statement, then speaker metadata.
pub fn read_liar_tsv(path: &Path) -> Result<Vec<Claim>, DatasetError> {
    let scheme = LabelScheme::liar();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader =
        csv::ReaderBuilder::new().delimiter(b'\t').has_headers(false).quoting(false).flexible(true).from_reader(file);
    let shown = path.display().to_string();
    let mut claims = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record =
            record.map_err(|e| DatasetError::Malformed { path: shown.clone(), line, message: e.to_string() })?;
        if record.len() < 3 {
            return Err(DatasetError::Malformed {
                path: shown.clone(),
                line,
                message: format!("expected at least 3 columns, found {}", record.len()),
            });
        }
        let label = scheme.label(record[1].trim()).map_err(|source| DatasetError::Label {
            path: shown.clone(),
            line,
            source,
        })?;
        let mut claim = Claim::new(record[0].trim(), record[2].trim()).with_gold(label);
        for (name, value) in LIAR_METADATA.iter().zip(record.iter().skip(3)) {
            if !value.is_empty() {
                claim.metadata.insert(name.to_string(), value.to_string());
            }
        }
        claims.push(claim);
    }
    Ok(claims)
}

/// LIAR split from a directory holding `train.tsv`, `valid.tsv`, `test.tsv`.
pub fn load_liar(dir: &Path, split: Split) -> Result<Vec<Claim>, DatasetError> {
    read_liar_tsv(&dir.join(liar_file(split)))
}

/// Field names read from each RAWFC JSON record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawfcFields {
    pub id: Vec<String>,
    pub text: String,
    pub label: String,
}

impl Default for RawfcFields {
    fn default() -> Self {
        RawfcFields { id: vec!["event_id".into(), "id".into()], text: "claim".into(), label: "label".into() }
    }
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// RAWFC split from `<dir>/<split>/*.json`, one claim per file, in file
/// name order.
pub fn load_rawfc(dir: &Path, split: Split) -> Result<Vec<Claim>, DatasetError> {
    load_rawfc_with(dir, split, &RawfcFields::default())
}

pub fn load_rawfc_with(dir: &Path, split: Split, fields: &RawfcFields) -> Result<Vec<Claim>, DatasetError> {
    let root = dir.join(split_dir(split));
    let mut files: Vec<PathBuf> = fs::read_dir(&root)
        .map_err(io_err(&root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let scheme = LabelScheme::rawfc();
    files.iter().map(|p| read_rawfc_file(p, &scheme, fields)).collect()
}

fn read_rawfc_file(path: &Path, scheme: &LabelScheme, fields: &RawfcFields) -> Result<Claim, DatasetError> {
    let shown = path.display().to_string();
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let malformed = |message: String| DatasetError::Malformed { path: shown.clone(), line: 1, message };
    let v: Value = serde_json::from_str(&raw).map_err(|e| malformed(e.to_string()))?;
    let as_text = |v: &Value| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    let id = fields
        .id
        .iter()
        .find_map(|f| v.get(f).and_then(as_text))
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let text =
        v.get(&fields.text).and_then(Value::as_str).ok_or_else(|| malformed(format!("missing `{}`", fields.text)))?;
    let label =
        v.get(&fields.label).and_then(Value::as_str).ok_or_else(|| malformed(format!("missing `{}`", fields.label)))?;
    let label =
        scheme.label(label.trim()).map_err(|source| DatasetError::Label { path: shown.clone(), line: 1, source })?;
    Ok(Claim::new(id, text.trim()).with_gold(label))
}

/// Reads claims from JSON Lines. Gold labels, when present, must belong to
/// `scheme`.
pub fn import_jsonl(path: &Path, scheme: &LabelScheme) -> Result<Vec<Claim>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let shown = path.display().to_string();
    let mut claims = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut claim: Claim = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: shown.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(gold) = claim.gold.take() {
            let label = scheme.label(gold.as_str()).map_err(|source| DatasetError::Label {
                path: shown.clone(),
                line: line_no,
                source,
            })?;
            claim.gold = Some(label);
        }
        claims.push(claim);
    }
    Ok(claims)
}

pub fn export_jsonl(claims: &[Claim], path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for c in claims {
        serde_json::to_writer(&mut out, c).expect("claim serializes");
        out.push(b'\n');
    }
    fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(io_err(path))
}

/// Draws `k` distinct claims from `pool`, reproducibly for a given seed.
pub fn select_demos(pool: &[Claim], k: usize, seed: u64) -> Result<Vec<Claim>, DatasetError> {
    if k > pool.len() {
        return Err(DatasetError::PoolTooSmall { requested: k, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i].clone()).collect())
}

/// Gold label counts in scheme order.
pub fn label_counts(claims: &[Claim], scheme: &LabelScheme) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = scheme.labels().iter().map(|l| (l.clone(), 0)).collect();
    for c in claims {
        if let Some(g) = &c.gold {
            *counts.entry(g.as_str().to_string()).or_default() += 1;
        }
    }
    counts
}
