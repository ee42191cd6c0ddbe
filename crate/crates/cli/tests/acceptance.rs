//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hiss_core::backend::{CompletionRequest, FinishReason, LlmBackend};
use hiss_core::datasets::{label_counts, load_liar, load_rawfc, Split};
use hiss_core::eval::{confusion, harmonic, macro_metrics, score};
use hiss_core::protocol::prompts::{stops, CONFIDENCE_PROBE};
use hiss_core::protocol::{detect_confidence, DemoSet, DemoStyle};
use hiss_core::search::{FactCheckFilter, DEFAULT_BANNED_KEYWORDS};
use hiss_core::{
    parse_final_line, Confidence, Label, LabelParseError, LabelScheme, ScriptEntry, ScriptedBackend, SearchHit,
    VerificationTrace,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const CASE_CLAIM: &str = "Says 57 percent of federal spending goes to the military and just 1 percent goes to food and agriculture, including food stamps.";

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

fn hiss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiss")).args(args).output().expect("spawn hiss")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

/// Few-shot rows of the main results table: (system, dataset, P, R, F1).
const FEW_SHOT_ROWS: [(&str, &str, f64, f64, f64); 10] = [
    ("Standard Prompt", "RAWFC", 48.5, 48.5, 48.5),
    ("Standard Prompt", "LIAR", 29.1, 25.1, 27.0),
    ("Vanilla CoT", "RAWFC", 42.4, 46.6, 44.4),
    ("Vanilla CoT", "LIAR", 22.6, 24.2, 23.7),
    ("Search-Augmented CoT", "RAWFC", 47.2, 51.4, 49.2),
    ("Search-Augmented CoT", "LIAR", 27.5, 23.6, 25.4),
    ("ReAct", "RAWFC", 51.2, 48.5, 49.8),
    ("ReAct", "LIAR", 33.2, 29.0, 31.0),
    ("HiSS", "RAWFC", 53.4, 54.4, 53.9),
    ("HiSS", "LIAR", 46.8, 31.3, 37.5),
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut off = Vec::new();
    for (system, dataset, p, r, f1) in FEW_SHOT_ROWS {
        let got = harmonic(p / 100.0, r / 100.0) * 100.0;
        if (got - f1).abs() > 0.05 + 1e-9 {
            off.push(format!("{system}/{dataset}: P {p} R {r} gives F1 {got:.2}, printed {f1}"));
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    ensure(off.is_empty(), || off.join("; "))?;
    Ok(format!("{} rows reproduce their F1", FEW_SHOT_ROWS.len()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut first: Option<Vec<u8>> = None;
    for _ in 0..3 {
        let out = hiss(&[
            "verify",
            "--scheme",
            "liar",
            "--method",
            "hiss",
            "--fixture",
            fixture("federal_spending.json").to_str().unwrap(),
            "--cache",
            fixture("federal_spending.cache.json").to_str().unwrap(),
            "--freeze-cache",
            CASE_CLAIM,
        ]);
        ensure(out.status.code() == Some(0), || {
            format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
        })?;
        match &first {
            None => first = Some(out.stdout.clone()),
            Some(f) => ensure(*f == out.stdout, || "runs differ".into())?,
        }
    }
    within(start.elapsed(), Duration::from_secs(2))?;
    let t: VerificationTrace = serde_json::from_slice(first.as_ref().unwrap()).map_err(|e| e.to_string())?;
    ensure(t.subclaims.len() == 2, || format!("{} subclaims", t.subclaims.len()))?;
    let s1 = &t.subclaims[0].steps;
    let s2 = &t.subclaims[1].steps;
    ensure(s1.iter().all(|s| s.confidence == Confidence::Confident && s.evidence.is_none()), || {
        "subclaim 1 should be confident without evidence".into()
    })?;
    ensure(s2.iter().any(|s| s.confidence == Confidence::NotConfident && s.evidence.is_some()), || {
        "subclaim 2 should be not confident with evidence".into()
    })?;
    ensure(t.verdict.label.as_str() == "false", || format!("verdict {}", t.verdict.label))?;
    Ok("2 subclaims, confident/not-confident split, verdict false, 3 identical runs".into())
}

/// Earliest stop occurrence, ties to the longest stop, by direct scan.
fn oracle_stop(raw: &str, stops: &[String]) -> Option<(usize, String)> {
    let lower = raw.to_ascii_lowercase();
    for i in 0..=lower.len() {
        if !lower.is_char_boundary(i) {
            continue;
        }
        let mut hits: Vec<&String> =
            stops.iter().filter(|s| !s.is_empty() && lower[i..].starts_with(&s.to_ascii_lowercase())).collect();
        hits.sort_by_key(|s| std::cmp::Reverse(s.len()));
        if let Some(s) = hits.first() {
            return Some((i, (*s).clone()));
        }
    }
    None
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool = ["no", "No", "\n", "\n\n", "\nQ:", "Question:", "To verify subclaim", "Based on the answers", "ab", "é"];
    let pieces = ["no", "NO", "not", "\n", "Q:", "Question: ", "to verify subclaim", "yes", " ", "a", "b", "é", "x"];
    for case in 0..1000 {
        let n_stops = rng.random_range(1..=4);
        let stop_set: Vec<String> = (0..n_stops).map(|_| pool[rng.random_range(0..pool.len())].to_string()).collect();
        let raw: String = (0..rng.random_range(1..12)).map(|_| pieces[rng.random_range(0..pieces.len())]).collect();
        let backend = ScriptedBackend::from_entries(vec![ScriptEntry::next(raw.clone())]).map_err(|e| e.to_string())?;
        let resp = backend.complete(&CompletionRequest::new("p").stops(stop_set.clone())).map_err(|e| e.to_string())?;
        let lower = resp.text.to_ascii_lowercase();
        if let Some(s) = stop_set.iter().find(|s| lower.contains(&s.to_ascii_lowercase())) {
            return Err(format!("case {case}: text {:?} contains stop {s:?}", resp.text));
        }
        let expected = oracle_stop(&raw, &stop_set);
        let got = resp.matched_stop.clone().map(|s| (resp.text.len(), s));
        ensure(got == expected, || {
            format!("case {case}: raw {raw:?} stops {stop_set:?}: got {got:?}, want {expected:?}")
        })?;
        let finish_ok = (resp.finish_reason == FinishReason::StopSequenceHit) == expected.is_some();
        ensure(finish_ok, || format!("case {case}: finish reason {:?}", resp.finish_reason))?;
    }
    let mut lines = 0;
    for scheme in ["liar", "rawfc"] {
        let demos = DemoSet::builtin(scheme, DemoStyle::Hiss).ok_or("missing demos")?;
        for demo in &demos.demos {
            for (pos, _) in demo.match_indices(CONFIDENCE_PROBE) {
                let rest = &demo[pos + CONFIDENCE_PROBE.len()..];
                let word = rest.trim_start().split(|c: char| !c.is_alphabetic()).next().unwrap_or("");
                let want = match word.to_ascii_lowercase().as_str() {
                    "yes" => Confidence::Confident,
                    "no" => Confidence::NotConfident,
                    other => return Err(format!("demo confidence line starts with {other:?}")),
                };
                let backend =
                    ScriptedBackend::from_entries(vec![ScriptEntry::next(rest)]).map_err(|e| e.to_string())?;
                let resp = backend
                    .complete(&CompletionRequest::new("p").stops(stops::CONFIDENCE))
                    .map_err(|e| e.to_string())?;
                let (got, _) = detect_confidence(&resp);
                ensure(got == want, || format!("{scheme}: {word:?} read as {got:?}"))?;
                lines += 1;
            }
        }
    }
    ensure(lines >= 8, || format!("only {lines} confidence lines in the demos"))?;
    Ok(format!("1000 fuzzed pairs, {lines} demo confidence lines"))
}

/// Lowercased URL with separators and their escapes removed.
fn squash(s: &str) -> String {
    let mut out = s.to_lowercase();
    for esc in ["%20", "%2d", "%5f", "%2b"] {
        out = out.replace(esc, "");
    }
    out.chars().filter(|c| !matches!(c, '-' | '_' | '+' | ' ')).collect()
}

fn criterion_4() -> Outcome {
    let filter = FactCheckFilter::default();
    let cited = [
        "https://www.politifact.com/factchecks/2019/mar/05/jane-doe/claim/",
        "https://www.nytimes.com/spotlight/fact-checks",
    ];
    for url in cited {
        ensure(filter.is_banned(url), || format!("{url} survives"))?;
    }
    let hosts = ["news.example.com", "www.nytimes.com", "politifact.com", "fact-check.org", "example.org"];
    let parts = ["fact", "check", "-", "_", "%20", "Fact", "CHECK", "s", "spotlight", "2020", "news", "/", "ing", "+"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hits: Vec<SearchHit> = (0..1000)
        .map(|i| {
            let path: String = (0..rng.random_range(1..8)).map(|_| parts[rng.random_range(0..parts.len())]).collect();
            let host = hosts[rng.random_range(0..hosts.len())];
            SearchHit::new(format!("https://{host}/{path}"), format!("t{i}"), format!("s{i}"))
        })
        .collect();
    let kept = filter.apply(&hits);
    let banned: Vec<String> = DEFAULT_BANNED_KEYWORDS.iter().map(|k| squash(k)).collect();
    for h in &kept {
        let u = squash(&h.url);
        if let Some(k) = banned.iter().find(|k| u.contains(k.as_str())) {
            return Err(format!("{} survives with keyword {k}", h.url));
        }
    }
    ensure(filter.apply(&kept) == kept, || "filter is not idempotent".into())?;
    ensure(kept.len() < hits.len() && !kept.is_empty(), || format!("degenerate sample: kept {}", kept.len()))?;
    Ok(format!("cited patterns removed, {} of 1000 fuzzed URLs survive cleanly, idempotent", kept.len()))
}

fn read_traces(path: &Path) -> Result<Vec<VerificationTrace>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn scripted_run_flags() -> Vec<String> {
    [
        "--dataset",
        "jsonl",
        "--data",
        fixture("ablation.jsonl").to_str().unwrap(),
        "--fixture",
        fixture("ablation.json").to_str().unwrap(),
        "--cache",
        fixture("ablation.cache.json").to_str().unwrap(),
        "--freeze-cache",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut args = vec!["ablate".to_string()];
    args.extend(scripted_run_flags());
    args.extend(["--grid", "no-decompose,search=never,search=always", "--out"].map(String::from));
    args.push(dir.path().to_str().unwrap().to_string());
    let out = hiss(&args.iter().map(String::as_str).collect::<Vec<_>>());
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    within(start.elapsed(), Duration::from_secs(5))?;
    let load = |name: &str| read_traces(&dir.path().join(format!("{name}.traces.jsonl")));
    let configs = [
        ("default", load("default")?),
        ("no-decompose", load("no-decompose")?),
        ("search=never", load("search-never")?),
        ("search=always", load("search-always")?),
    ];
    for (name, traces) in &configs {
        ensure(traces.len() == 10, || format!("{name}: {} traces", traces.len()))?;
        for t in traces {
            let id = &t.claim.id;
            match *name {
                "no-decompose" => {
                    ensure(t.subclaims.len() == 1 && t.subclaims[0].subclaim.text == t.claim.text, || {
                        format!("{name} {id}: {} subclaims", t.subclaims.len())
                    })?
                }
                "search=never" => {
                    ensure(t.steps().all(|s| s.evidence.is_none()), || format!("{name} {id}: evidence present"))?
                }
                "search=always" => ensure(t.steps().all(|s| s.evidence.is_some() || s.no_evidence), || {
                    format!("{name} {id}: unsearched step")
                })?,
                _ => ensure(t.steps().all(|s| s.searched() == (s.confidence == Confidence::NotConfident)), || {
                    format!("{name} {id}: search does not track confidence")
                })?,
            }
        }
    }
    Ok("4 configurations x 10 claims hold their invariants".into())
}

/// Final-line templates; `{}` is replaced by the label.
const TEMPLATES: [&str; 20] = [
    "Based on the answers to these questions, it is clear that among pants-fire, false, barely-true, half-true, mostly-true, and true, the claim can be classified as {}.",
    "the claim is classified as {}",
    "Thus the claim is classified as {}.",
    "Therefore, the claim is classified as {}!",
    "The claim is classified as \"{}\".",
    "The claim is classified as '{}'",
    "Overall the claim is classified as {} based on the evidence.",
    "so the claim is classified as {}, given the numbers",
    "CLAIM IS CLASSIFIED AS {}",
    "It is classified as {} .",
    "A: the claim is classified as {}.",
    "   the claim is classified as {}   ",
    "Conclusion: classified as {}",
    "the claim can be classified as ({})",
    "the claim is classified as **{}**",
    "We find it is classified as {}; done.",
    "the claim is classified as {}.\nQ:",
    "Among all labels the claim is classified as {}.",
    "reasoning first.\nthe claim is classified as {}.",
    "classified as {}?",
];

fn criterion_6() -> Outcome {
    let liar = LabelScheme::liar();
    let mut checked = 0;
    for label in liar.labels() {
        for (i, template) in TEMPLATES.iter().enumerate() {
            for shown in [label.clone(), label.to_uppercase()] {
                let line = template.replace("{}", &shown);
                let v = parse_final_line(&line, &liar).map_err(|e| format!("template {i} with {shown}: {e}"))?;
                ensure(v.label.as_str() == label, || format!("template {i}: {shown} read as {}", v.label))?;
                checked += 1;
            }
        }
    }
    let prefix = "Based on the answers to these questions, it is clear that among pants-fire, false, barely-true, half-true, mostly-true, and true, the claim can be classified as false.";
    let repeated = format!("{prefix} {prefix}\n");
    let v = parse_final_line(&repeated, &liar).map_err(|e| e.to_string())?;
    ensure(v.label.as_str() == "false", || format!("repeated line read as {}", v.label))?;
    for word in ["uncertain", "mostly", "truthful", "half", "pants"] {
        let r = parse_final_line(&format!("the claim is classified as {word}."), &liar);
        ensure(matches!(r, Err(LabelParseError::LabelNotInScheme(_))), || format!("{word} gave {r:?}"))?;
    }
    Ok(format!("{checked} templated lines, repeated line, 5 non-scheme words rejected"))
}

fn criterion_7() -> Outcome {
    let s = LabelScheme::rawfc();
    let l = |x: &str| s.label(x).unwrap();
    let gold = vec![l("true"), l("false"), l("half"), l("true")];
    let pred = vec![Some(l("true")), Some(l("half")), Some(l("half")), Some(l("false"))];
    let m = score(&gold, &pred, &s).map_err(|e| e.to_string())?;
    let per: BTreeMap<&str, (f64, f64)> =
        m.per_class.iter().map(|c| (c.label.as_str(), (c.precision, c.recall))).collect();
    let want = [("true", (1.0, 0.5)), ("false", (0.0, 0.0)), ("half", (0.5, 1.0))];
    for (label, pr) in want {
        ensure(per[label] == pr, || format!("{label}: {:?}, want {pr:?}", per[label]))?;
    }
    ensure(m.f1 == 0.5, || format!("macro F1 {}", m.f1))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let liar = LabelScheme::liar();
    for case in 0..10_000 {
        let scheme = if case % 2 == 0 { &s } else { &liar };
        let k = scheme.len();
        let n = rng.random_range(1..40);
        let gold: Vec<Label> = (0..n).map(|_| scheme.label_at(rng.random_range(0..k))).collect();
        let pred: Vec<Option<Label>> = (0..n)
            .map(|_| if rng.random_bool(0.1) { None } else { Some(scheme.label_at(rng.random_range(0..k))) })
            .collect();
        let c = confusion(&gold, &pred, scheme).map_err(|e| e.to_string())?;
        let m = macro_metrics(&c);
        // Independent recount from the raw pairs.
        let (mut p_sum, mut r_sum) = (0.0, 0.0);
        for i in 0..k {
            let li = scheme.label_at(i);
            let tp = gold.iter().zip(&pred).filter(|(g, p)| **g == li && p.as_ref() == Some(&li)).count();
            let predicted = pred.iter().filter(|p| p.as_ref() == Some(&li)).count();
            let support = gold.iter().filter(|g| **g == li).count();
            p_sum += if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            r_sum += if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        }
        let (p, r) = (p_sum / k as f64, r_sum / k as f64);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        ensure(close(m.precision, p) && close(m.recall, r), || format!("case {case}: macro P/R mismatch"))?;
        ensure(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-12, || format!("case {case}: F1 above mean"))?;
        for x in [m.precision, m.recall, m.f1] {
            ensure((0.0..=1.0).contains(&x), || format!("case {case}: {x} out of range"))?;
        }
        ensure(m.per_class.iter().all(|c| (0.0..=1.0).contains(&c.f1)), || format!("case {case}: class F1 range"))?;
        ensure(c.total() == n, || format!("case {case}: confusion total {}", c.total()))?;
    }
    Ok("hand case exact, 10000 random matrices within invariants".into())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let traces = dir.path().join(format!("{run}.jsonl"));
        let mut args = vec!["batch".to_string()];
        args.extend(scripted_run_flags());
        args.extend(["--jobs", "4", "--seed", "11", "--out"].map(String::from));
        args.push(traces.to_str().unwrap().to_string());
        let out = hiss(&args.iter().map(String::as_str).collect::<Vec<_>>());
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let preds = dir.path().join(format!("{run}.predictions.jsonl"));
        let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
        files.push((read(&traces)?, read(&preds)?));
    }
    ensure(files[0].0 == files[1].0, || "trace files differ".into())?;
    ensure(files[0].1 == files[1].1, || "prediction files differ".into())?;
    let lines = String::from_utf8_lossy(&files[0].0).lines().count();
    ensure(lines == 10, || format!("{lines} traces"))?;
    Ok(format!("two --jobs 4 runs byte-identical ({lines} traces)"))
}

fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(l, n)| (l.to_string(), *n)).collect()
}

fn criterion_9() -> Outcome {
    let liar = LabelScheme::liar();
    let rawfc = LabelScheme::rawfc();
    let mini_liar = fixture("mini_liar");
    let mini_rawfc = fixture("mini_rawfc");
    let err = |e: hiss_core::datasets::DatasetError| e.to_string();
    ensure(load_liar(&mini_liar, Split::Train).map_err(err)?.len() == 12, || "mini LIAR train".into())?;
    ensure(load_liar(&mini_liar, Split::Val).map_err(err)?.len() == 6, || "mini LIAR val".into())?;
    let test = load_liar(&mini_liar, Split::Test).map_err(err)?;
    let want = counts(&[
        ("pants-fire", 1),
        ("false", 2),
        ("barely-true", 2),
        ("half-true", 3),
        ("mostly-true", 2),
        ("true", 2),
    ]);
    ensure(label_counts(&test, &liar) == want, || format!("mini LIAR test {:?}", label_counts(&test, &liar)))?;
    ensure(load_rawfc(&mini_rawfc, Split::Train).map_err(err)?.len() == 6, || "mini RAWFC train".into())?;
    ensure(load_rawfc(&mini_rawfc, Split::Val).map_err(err)?.len() == 3, || "mini RAWFC val".into())?;
    let test = load_rawfc(&mini_rawfc, Split::Test).map_err(err)?;
    let want = counts(&[("true", 3), ("half", 2), ("false", 4)]);
    ensure(label_counts(&test, &rawfc) == want, || format!("mini RAWFC test {:?}", label_counts(&test, &rawfc)))?;
    let mut note = String::from("miniature fixtures exact");

    if let Some(dir) = std::env::var_os("HISS_LIAR_DIR").map(PathBuf::from) {
        let test = load_liar(&dir, Split::Test).map_err(err)?;
        let val = load_liar(&dir, Split::Val).map_err(err)?;
        ensure(test.len() == 1251 && val.len() == 1274, || format!("LIAR test {} val {}", test.len(), val.len()))?;
        note.push_str(", full LIAR 1251/1274");
    } else {
        note.push_str(", full LIAR not supplied");
    }
    if let Some(dir) = std::env::var_os("HISS_RAWFC_DIR").map(PathBuf::from) {
        let test = load_rawfc(&dir, Split::Test).map_err(err)?;
        let want = counts(&[("true", 67), ("half", 66), ("false", 67)]);
        let got = label_counts(&test, &rawfc);
        ensure(test.len() == 200 && got == want, || format!("RAWFC test {} {got:?}", test.len()))?;
        note.push_str(", full RAWFC 200 = 67/66/67");
    } else {
        note.push_str(", full RAWFC not supplied");
    }
    Ok(note)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric convention reproduces printed F1", criterion_1),
        ("case-study replay through verify", criterion_2),
        ("stop sequences and confidence gate", criterion_3),
        ("fact-check source filter", criterion_4),
        ("ablation invariants", criterion_5),
        ("final-label parser", criterion_6),
        ("evaluation oracle", criterion_7),
        ("batch determinism with 4 jobs", criterion_8),
        ("dataset loader counts", criterion_9),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let line = match check() {
            Ok(detail) => format!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                format!("criterion {} FAIL  {name}: {why}", i + 1)
            }
        };
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
