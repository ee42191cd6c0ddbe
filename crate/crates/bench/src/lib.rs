//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use hiss_core::{Label, LabelScheme, SearchHit};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// `n` gold/prediction pairs cycling through the scheme, every seventh
/// prediction abstaining.
pub fn label_pairs(scheme: &LabelScheme, n: usize) -> (Vec<Label>, Vec<Option<Label>>) {
    let k = scheme.len();
    let gold = (0..n).map(|i| scheme.label_at(i % k)).collect();
    let pred = (0..n).map(|i| (i % 7 != 0).then(|| scheme.label_at((i * 3 + 1) % k))).collect();
    (gold, pred)
}

/// A results page where every third hit is a fact-check source.
pub fn search_page(n: usize) -> Vec<SearchHit> {
    (0..n)
        .map(|i| {
            let url = if i % 3 == 0 {
                format!("https://www.politifact.com/factchecks/2020/item-{i}/")
            } else {
                format!("https://news{i}.example.org/story/{i}")
            };
            SearchHit::new(url, format!("title {i}"), format!("snippet {i}"))
        })
        .collect()
}
