use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use hiss_core::search::{export_cache, import_cache};
use hiss_core::SearchCache;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn hiss<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiss"))
        .args(args)
        .env_remove("HISS_LLM_API_KEY")
        .env_remove("HISS_SEARCH_API_KEY")
        .output()
        .expect("spawn hiss")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_code(o: &Output) -> String {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let v: Value = serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"));
    v["error"]["code"].as_str().unwrap().to_string()
}

fn write_fixture(dir: &Path, continuations: &[&str]) -> PathBuf {
    let entries: Vec<Value> = continuations.iter().map(|c| serde_json::json!({ "continuation": c })).collect();
    let path = dir.join("fixture.json");
    fs::write(&path, serde_json::json!({ "default": entries }).to_string()).unwrap();
    path
}

fn batch_args(cache: &Path, out: &Path) -> Vec<String> {
    let data = fixture("ablation.jsonl");
    let fx = fixture("ablation.json");
    [
        "batch",
        "--dataset",
        "jsonl",
        "--data",
        p(&data),
        "--fixture",
        p(&fx),
        "--cache",
        p(cache),
        "--freeze-cache",
        "--out",
        p(out),
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn standard_prompt_with_scripted_label_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), &[" mostly-true.\n"]);
    let o = hiss(&["verify", "--scheme", "liar", "--method", "standard", "--fixture", p(&fx), "A claim."]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(t["verdict"]["label"], "mostly-true");
    assert_eq!(t["method"], "standard");
}

#[test]
fn missing_api_key_without_fixture_is_an_infrastructure_error() {
    let o = hiss(&["verify", "--scheme", "liar", "A claim."]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_code(&o), "backend_unavailable");
}

#[test]
fn unparseable_label_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), &[" unclear.\n"]);
    let o = hiss(&["verify", "--scheme", "rawfc", "--method", "standard", "--fixture", p(&fx), "A claim."]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "label_not_in_scheme");
}

#[test]
fn unknown_flags_are_rejected() {
    let o = hiss(&["verify", "--shots", "3", "A claim."]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--shots"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), &[" half.\n"]);
    let cfg = dir.path().join("hiss.toml");
    fs::write(&cfg, format!("scheme = \"rawfc\"\nmethod = \"standard\"\nk = 9\nfixture = {:?}\n", p(&fx))).unwrap();
    // k = 9 exceeds the four built-in demos.
    let o = hiss(&["--config", p(&cfg), "verify", "A claim."]);
    assert_eq!(error_code(&o), "insufficient_demos");
    let o = hiss(&["--config", p(&cfg), "verify", "--k", "2", "A claim."]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((t["shot_count"].as_u64(), t["verdict"]["label"].as_str()), (Some(2), Some("half")));
}

#[test]
fn resume_reruns_only_missing_claims() {
    let dir = tempfile::tempdir().unwrap();
    let cache = fixture("ablation.cache.json");
    let full = dir.path().join("full.jsonl");
    let o = hiss(&batch_args(&cache, &full));
    assert!(o.status.success());
    let traces = fs::read_to_string(&full).unwrap();
    let preds = fs::read_to_string(dir.path().join("full.predictions.jsonl")).unwrap();

    let part = dir.path().join("part.jsonl");
    let head: String = traces.lines().take(5).map(|l| format!("{l}\n")).collect();
    fs::write(&part, format!("{head}{{\"claim\":{{\"id\"")).unwrap();
    let pred_head: String = preds.lines().take(6).map(|l| format!("{l}\n")).collect();
    fs::write(dir.path().join("part.predictions.jsonl"), pred_head).unwrap();

    let mut args = batch_args(&cache, &part);
    args.push("--resume".into());
    let o = hiss(&args);
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    assert_eq!(summary["claims"], 5);
    assert_eq!(fs::read_to_string(&part).unwrap(), traces);
    assert_eq!(fs::read_to_string(dir.path().join("part.predictions.jsonl")).unwrap(), preds);
}

#[test]
fn frozen_cache_miss_fails_only_that_claim() {
    let dir = tempfile::tempdir().unwrap();
    let full = import_cache(&fixture("ablation.cache.json")).unwrap();
    let dropped = full.entries().keys().next().unwrap().clone();
    let mut cache = SearchCache::new();
    for (q, hits) in full.entries().iter().filter(|(q, _)| **q != dropped) {
        cache.insert(q, hits.clone());
    }
    let cache_path = dir.path().join("cache.json");
    export_cache(&cache, &cache_path).unwrap();
    let out = dir.path().join("t.jsonl");
    let o = hiss(&batch_args(&cache_path, &out));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frozen_cache_miss"));
    let summary: Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
    let failures = summary["failures"].as_u64().unwrap();
    assert!(failures >= 1);
    let written = fs::read_to_string(&out).unwrap().lines().count() as u64;
    assert_eq!(written + failures, 10);
}

fn gold_file(dir: &Path) -> PathBuf {
    let path = dir.join("gold.jsonl");
    let rows = [("a", "true"), ("b", "false"), ("c", "half"), ("d", "true")];
    let text: String =
        rows.iter().map(|(id, g)| format!("{{\"id\":\"{id}\",\"text\":\"claim {id}\",\"gold\":\"{g}\"}}\n")).collect();
    fs::write(&path, text).unwrap();
    path
}

fn predictions(dir: &Path, name: &str, rows: &[(&str, &str)]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows.iter().map(|(id, l)| format!("{{\"id\":\"{id}\",\"label\":\"{l}\"}}\n")).collect();
    fs::write(&path, text).unwrap();
    path
}

fn eval_json(gold: &Path, preds: &Path) -> Output {
    hiss(&[
        "eval",
        "--dataset",
        "jsonl",
        "--scheme",
        "rawfc",
        "--data",
        p(gold),
        "--predictions",
        p(preds),
        "--format",
        "json",
    ])
}

#[test]
fn eval_scores_all_correct_and_hand_counted_files() {
    let dir = tempfile::tempdir().unwrap();
    let gold = gold_file(dir.path());
    let perfect = predictions(dir.path(), "p1.jsonl", &[("a", "true"), ("b", "false"), ("c", "half"), ("d", "true")]);
    let v: Value = serde_json::from_str(&stdout(&eval_json(&gold, &perfect))).unwrap();
    assert_eq!(v["metrics"]["f1"], 1.0);
    let mixed = predictions(dir.path(), "p2.jsonl", &[("a", "true"), ("b", "half"), ("c", "half"), ("d", "false")]);
    let v: Value = serde_json::from_str(&stdout(&eval_json(&gold, &mixed))).unwrap();
    assert_eq!(v["metrics"]["f1"], 0.5);
}

#[test]
fn eval_lists_abstentions_and_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let gold = gold_file(dir.path());
    let partial = predictions(dir.path(), "p.jsonl", &[("a", "true"), ("c", "half")]);
    let v: Value = serde_json::from_str(&stdout(&eval_json(&gold, &partial))).unwrap();
    assert_eq!(v["abstentions"], 2);
    assert_eq!(v["abstained_ids"], serde_json::json!(["b", "d"]));

    let unknown = predictions(dir.path(), "u.jsonl", &[("zzz", "true")]);
    let o = eval_json(&gold, &unknown);
    assert_eq!((o.status.code(), error_code(&o)), (Some(1), "unknown_id".to_string()));

    let bad = predictions(dir.path(), "b.jsonl", &[("a", "mostly-true")]);
    let o = eval_json(&gold, &bad);
    assert_eq!((o.status.code(), error_code(&o)), (Some(2), "label_not_in_scheme".to_string()));
}

#[test]
fn eval_compares_two_systems() {
    let dir = tempfile::tempdir().unwrap();
    let gold = gold_file(dir.path());
    let a = predictions(dir.path(), "a.jsonl", &[("a", "true"), ("b", "false"), ("c", "half"), ("d", "true")]);
    let b = predictions(dir.path(), "b.jsonl", &[("a", "half"), ("b", "true"), ("c", "false"), ("d", "half")]);
    let args = ["eval", "--dataset", "jsonl", "--data", p(&gold), "--predictions", p(&a), "--baseline", p(&b)];
    let first = stdout(&hiss(&[&args[..], &["--permutations", "2000", "--seed", "5"]].concat()));
    let again = stdout(&hiss(&[&args[..], &["--permutations", "2000", "--seed", "5"]].concat()));
    assert_eq!(first, again);
    assert!(first.contains("vs baseline: delta F1 +100.0"), "{first}");
    let o = hiss(&[&args[..], &["--permutations", "10"]].concat());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_with_empty_grid_runs_default_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let mut args = batch_args(&fixture("ablation.cache.json"), &out);
    args[0] = "ablate".into();
    args.extend(["--format", "csv"].map(String::from));
    let o = hiss(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["default.predictions.jsonl", "default.report.csv", "default.traces.jsonl"]);
    let csv = fs::read_to_string(out.join("default.report.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("macro,"));
}

#[test]
fn cache_stats_and_merge() {
    let dir = tempfile::tempdir().unwrap();
    let merged = dir.path().join("m.json");
    let o = hiss(&[
        "cache",
        "merge",
        fixture("federal_spending.cache.json").to_str().unwrap(),
        fixture("ablation.cache.json").to_str().unwrap(),
        "--out",
        p(&merged),
    ]);
    assert!(o.status.success());
    let a = import_cache(&fixture("federal_spending.cache.json")).unwrap().len();
    let b = import_cache(&fixture("ablation.cache.json")).unwrap().len();
    let o = hiss(&["cache", "stats", p(&merged)]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["queries"].as_u64().unwrap() as usize, a + b);
}

#[test]
fn demos_show_and_seeded_select() {
    let o = hiss(&["demos", "show", "--scheme", "liar", "--method", "standard"]);
    assert!(stdout(&o).starts_with("# liar/standard@v1\n"));
    let data = fixture("mini_rawfc");
    let select = |seed: &str| {
        let o = hiss(&["demos", "select", "--dataset", "rawfc", "--data", p(&data), "--k", "3", "--seed", seed]);
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["ids"].clone()
    };
    let ids = select("1");
    assert_eq!(ids.as_array().unwrap().len(), 3);
    assert!(ids.as_array().unwrap().iter().all(|i| i.as_str().unwrap().starts_with("train")));
    assert_eq!(select("1"), ids);
}
