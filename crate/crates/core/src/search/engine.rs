use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{normalize_query, SearchError, SearchHit};

/// A live search provider.
pub trait SearchEngine: Send + Sync {
    fn search(&self, query: &str, depth: usize) -> Result<Vec<SearchHit>, SearchError>;
}

/// In-memory engine keyed by normalized query. Counts every call, which
/// makes it handy for asserting that frozen runs stay offline.
#[derive(Default)]
pub struct StaticEngine {
    results: HashMap<String, Vec<SearchHit>>,
    calls: Arc<AtomicUsize>,
}

impl StaticEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, query: &str, hits: Vec<SearchHit>) -> Self {
        self.results.insert(normalize_query(query), hits);
        self
    }

    pub fn counter(&self) -> Arc<AtomicUsize> {
        self.calls.clone()
    }
}

impl SearchEngine for StaticEngine {
    fn search(&self, query: &str, depth: usize) -> Result<Vec<SearchHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut hits = self.results.get(&normalize_query(query)).cloned().unwrap_or_default();
        hits.truncate(depth);
        Ok(hits)
    }
}

/// Any JSON search API returning an array of url/title/snippet records.
/// Field names are configurable; the defaults fit SerpAPI's Google engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSearchConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub api_key_param: String,
    pub query_param: String,
    pub depth_param: String,
    pub extra_params: Vec<(String, String)>,
    pub results_field: String,
    pub url_field: String,
    pub title_field: String,
    pub snippet_field: String,
    pub timeout_secs: u64,
}

impl Default for HttpSearchConfig {
    fn default() -> Self {
        HttpSearchConfig {
            endpoint: "https://serpapi.com/search.json".into(),
            api_key_env: "HISS_SEARCH_API_KEY".into(),
            api_key_param: "api_key".into(),
            query_param: "q".into(),
            depth_param: "num".into(),
            extra_params: vec![("engine".into(), "google".into())],
            results_field: "organic_results".into(),
            url_field: "link".into(),
            title_field: "title".into(),
            snippet_field: "snippet".into(),
            timeout_secs: 30,
        }
    }
}

pub struct HttpSearchEngine {
    config: HttpSearchConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpSearchEngine {
    pub fn from_env(config: HttpSearchConfig) -> Result<Self, SearchError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| SearchError::Unavailable(format!("API key variable {} is not set", config.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpSearchEngine { config, api_key, agent })
    }

    fn parse(&self, body: &Value) -> Vec<SearchHit> {
        parse_results(&self.config, body)
    }
}

fn parse_results(config: &HttpSearchConfig, body: &Value) -> Vec<SearchHit> {
    let field = |v: &Value, name: &str| v.get(name).and_then(Value::as_str).unwrap_or_default().to_string();
    body.get(&config.results_field)
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|item| SearchHit {
                    url: field(item, &config.url_field),
                    title: field(item, &config.title_field),
                    snippet: field(item, &config.snippet_field),
                })
                .collect()
        })
        .unwrap_or_default()
}

impl SearchEngine for HttpSearchEngine {
    fn search(&self, query: &str, depth: usize) -> Result<Vec<SearchHit>, SearchError> {
        let mut req = self
            .agent
            .get(&self.config.endpoint)
            .query(&self.config.query_param, query)
            .query(&self.config.api_key_param, &self.api_key)
            .query(&self.config.depth_param, depth.to_string());
        for (k, v) in &self.config.extra_params {
            req = req.query(k, v);
        }
        let mut resp = req.call().map_err(|e| SearchError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text =
            resp.body_mut().read_to_string().map_err(|e| SearchError::Unavailable(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(SearchError::Unavailable(format!("HTTP {status}: {text}")));
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| SearchError::Unavailable(format!("malformed search body: {e}")))?;
        let mut hits = self.parse(&body);
        hits.truncate(depth);
        Ok(hits)
    }
}
