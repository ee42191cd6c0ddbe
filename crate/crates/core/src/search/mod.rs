//! Web-search evidence: query, drop fact-checking sources, keep the top
//! snippet, and cache results so runs can be frozen and replayed.

mod cache;
mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{export_cache, import_cache, SearchCache, SearchService};
pub use engine::{HttpSearchConfig, HttpSearchEngine, SearchEngine, StaticEngine};

/// Snippets longer than this are cut before they enter a prompt.
pub const MAX_SNIPPET_CHARS: usize = 600;
pub const DEFAULT_FETCH_DEPTH: usize = 10;

pub const DEFAULT_BANNED_KEYWORDS: [&str; 5] =
    ["fact check", "fact-check", "factcheck", "fact-checking", "factchecking"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("query {0:?} is not in the frozen search cache")]
    FrozenCacheMiss(String),
    #[error("search engine unavailable: {0}")]
    Unavailable(String),
    #[error("cache file I/O failed: {0}")]
    Io(String),
    #[error("malformed cache file: {0}")]
    MalformedCacheFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
}

impl SearchHit {
    pub fn new(url: impl Into<String>, title: impl Into<String>, snippet: impl Into<String>) -> Self {
        SearchHit { url: url.into(), title: title.into(), snippet: snippet.into() }
    }

    pub fn has_valid_url(&self) -> bool {
        url::Url::parse(&self.url).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSnippet {
    pub text: String,
    pub source_url: String,
    /// The question that was searched.
    pub query: String,
}

/// Cache key form of a query: trimmed, internal whitespace collapsed to one
/// space, lowercased.
pub fn normalize_query(query: &str) -> String {
    query.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// URL forms the keyword check runs against: the lowercased URL, and the
/// same with separators (`-`, `_`, `+`, spaces and their percent escapes)
/// removed.
pub fn normalized_url_forms(url: &str) -> (String, String) {
    let plain = url.to_lowercase();
    (plain.clone(), collapse_separators(&plain))
}

fn collapse_separators(s: &str) -> String {
    let mut out = s.to_string();
    for esc in ["%20", "%2d", "%5f", "%2b"] {
        out = out.replace(esc, "");
    }
    out.retain(|c| !matches!(c, '-' | '_' | '+' | ' '));
    out
}

/// Removes search results that point at fact-checking pages, so the model
/// never sees the verdict it is asked to reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCheckFilter {
    keywords: Vec<String>,
}

impl Default for FactCheckFilter {
    fn default() -> Self {
        Self::new(DEFAULT_BANNED_KEYWORDS)
    }
}

impl FactCheckFilter {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        FactCheckFilter {
            keywords: keywords.into_iter().map(|k| k.as_ref().to_lowercase()).filter(|k| !k.is_empty()).collect(),
        }
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn is_banned(&self, url: &str) -> bool {
        let (plain, collapsed) = normalized_url_forms(url);
        self.keywords.iter().any(|k| plain.contains(k.as_str()) || collapsed.contains(&collapse_separators(k)))
    }

    pub fn apply(&self, hits: &[SearchHit]) -> Vec<SearchHit> {
        hits.iter().filter(|h| !self.is_banned(&h.url)).cloned().collect()
    }
}

/// [`FactCheckFilter::apply`] with the default keyword list.
pub fn filter_fact_check(hits: &[SearchHit]) -> Vec<SearchHit> {
    FactCheckFilter::default().apply(hits)
}

/// First hit with a non-blank snippet, truncated to [`MAX_SNIPPET_CHARS`].
pub fn select_top_snippet(hits: &[SearchHit], query: &str) -> Option<EvidenceSnippet> {
    hits.iter().find(|h| !h.snippet.trim().is_empty()).map(|h| EvidenceSnippet {
        text: truncate_chars(h.snippet.trim(), MAX_SNIPPET_CHARS),
        source_url: h.url.clone(),
        query: query.to_string(),
    })
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((byte, _)) => s[..byte].trim_end().to_string(),
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hit(url: &str) -> SearchHit {
        SearchHit::new(url, "t", "s")
    }

    #[test]
    fn cited_fact_check_urls_are_removed() {
        let hits = vec![
            hit("https://www.nytimes.com/spotlight/fact-checks"),
            hit("https://www.politifact.com/factchecks/2016/jul/18/some-claim/"),
            hit("https://www.cbo.gov/topics/defense"),
        ];
        let kept = filter_fact_check(&hits);
        assert_eq!(kept, vec![hit("https://www.cbo.gov/topics/defense")]);
    }

    #[test]
    fn hand_normalized_politifact_path_contains_keyword() {
        // Lowercased with '-', '_' and "%20" stripped by hand.
        let url = "https://www.PolitiFact.com/Fact_Checks/2016/jul/18/Some%20Claim/";
        let by_hand = "https://www.politifact.com/factchecks/2016/jul/18/someclaim/";
        assert!(by_hand.contains("factcheck"));
        assert_eq!(normalized_url_forms(url).1, by_hand);
        assert!(FactCheckFilter::default().is_banned(url));
    }

    #[test]
    fn encoded_and_underscored_variants_are_caught() {
        let f = FactCheckFilter::default();
        assert!(f.is_banned("https://example.com/Fact_Check/item"));
        assert!(f.is_banned("https://example.com/search?q=fact%20checking"));
        assert!(f.is_banned("https://example.com/FACT+CHECK"));
        assert!(!f.is_banned("https://example.com/facts/checkout"));
    }

    #[test]
    fn survivors_keep_their_order() {
        let hits = vec![hit("https://a.org/1"), hit("https://b.org/fact-check"), hit("https://c.org/3")];
        let kept = filter_fact_check(&hits);
        assert_eq!(kept.iter().map(|h| h.url.as_str()).collect::<Vec<_>>(), ["https://a.org/1", "https://c.org/3"]);
    }

    #[test]
    fn top_snippet_skips_blank_ones() {
        let hits = vec![
            SearchHit::new("https://a.org", "A", "  "),
            SearchHit::new("https://b.org", "B", "Federal spending on USDA programs"),
        ];
        let ev = select_top_snippet(&hits, "q").unwrap();
        assert_eq!(ev.source_url, "https://b.org");
        assert_eq!(ev.text, "Federal spending on USDA programs");
        assert_eq!(ev.query, "q");
        assert_eq!(select_top_snippet(&[], "q"), None);
    }

    #[test]
    fn long_snippets_are_truncated_on_char_boundaries() {
        let long = "é".repeat(700);
        let ev = select_top_snippet(&[SearchHit::new("https://x.org", "", long)], "q").unwrap();
        assert_eq!(ev.text.chars().count(), MAX_SNIPPET_CHARS);
    }

    #[test]
    fn query_normalization() {
        assert_eq!(normalize_query("  What   percentage\tOF spending? "), "what percentage of spending?");
    }

    #[test]
    fn url_validity() {
        assert!(hit("https://www.cbo.gov/topics/defense").has_valid_url());
        assert!(!hit("not a url").has_valid_url());
    }

    fn url_strategy() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            Just("fact".to_string()),
            Just("check".to_string()),
            Just("checking".to_string()),
            Just("FACT".to_string()),
            Just("Check".to_string()),
            Just("-".to_string()),
            Just("_".to_string()),
            Just("%20".to_string()),
            Just("+".to_string()),
            Just("/".to_string()),
            "[a-z0-9]{1,6}",
        ];
        proptest::collection::vec(piece, 0..10).prop_map(|parts| format!("https://example.com/{}", parts.concat()))
    }

    proptest! {
        #[test]
        fn filter_is_idempotent_and_leaves_no_banned_survivor(
            urls in proptest::collection::vec(url_strategy(), 0..12)
        ) {
            let hits: Vec<_> = urls.iter().map(|u| hit(u)).collect();
            let once = filter_fact_check(&hits);
            prop_assert_eq!(filter_fact_check(&once), once.clone());
            for h in &once {
                let (plain, collapsed) = normalized_url_forms(&h.url);
                for k in DEFAULT_BANNED_KEYWORDS {
                    prop_assert!(!plain.contains(k));
                    prop_assert!(!collapsed.contains(&collapse_separators(k)));
                }
            }
        }

        #[test]
        fn query_normalization_is_idempotent(q in "[ a-zA-Z\\t?]{0,40}") {
            let n = normalize_query(&q);
            prop_assert_eq!(normalize_query(&n), n);
        }
    }
}
