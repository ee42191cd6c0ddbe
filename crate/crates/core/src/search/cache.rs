use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::{
    normalize_query, select_top_snippet, EvidenceSnippet, FactCheckFilter, SearchEngine, SearchError, SearchHit,
    DEFAULT_FETCH_DEPTH,
};

/// Normalized query → ordered hits. A frozen cache never goes to the network.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchCache {
    entries: BTreeMap<String, Vec<SearchHit>>,
    pub frozen: bool,
}

impl SearchCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn get(&self, query: &str) -> Option<&[SearchHit]> {
        self.entries.get(&normalize_query(query)).map(Vec::as_slice)
    }

    pub fn insert(&mut self, query: &str, hits: Vec<SearchHit>) {
        self.entries.insert(normalize_query(query), hits);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<String, Vec<SearchHit>> {
        &self.entries
    }

    /// Cache-only lookup: a hit, a frozen miss, or `None` for a live miss.
    pub fn lookup(&self, query: &str) -> Result<Option<Vec<SearchHit>>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        match self.get(query) {
            Some(hits) => Ok(Some(hits.to_vec())),
            None if self.frozen => Err(SearchError::FrozenCacheMiss(normalize_query(query))),
            None => Ok(None),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.entries).expect("cache serializes");
        s.push('\n');
        s
    }

    pub fn from_json(raw: &str) -> Result<Self, SearchError> {
        let parsed: BTreeMap<String, Vec<SearchHit>> =
            serde_json::from_str(raw).map_err(|e| SearchError::MalformedCacheFile(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (key, hits) in parsed {
            let norm = normalize_query(&key);
            if norm.is_empty() {
                return Err(SearchError::MalformedCacheFile("empty query key".into()));
            }
            match entries.get(&norm) {
                Some(existing) if existing != &hits => {
                    return Err(SearchError::MalformedCacheFile(format!(
                        "keys normalizing to {norm:?} carry different hits"
                    )))
                }
                _ => {
                    entries.insert(norm, hits);
                }
            }
        }
        Ok(SearchCache { entries, frozen: false })
    }
}

pub fn export_cache(cache: &SearchCache, path: &Path) -> Result<(), SearchError> {
    fs::write(path, cache.to_json()).map_err(|e| SearchError::Io(format!("{}: {e}", path.display())))
}

/// Loads a cache file. The result is unfrozen; freezing is a run setting.
pub fn import_cache(path: &Path) -> Result<SearchCache, SearchError> {
    let raw = fs::read_to_string(path).map_err(|e| SearchError::Io(format!("{}: {e}", path.display())))?;
    SearchCache::from_json(&raw)
}

/// Thread-safe front end over a cache and an optional live engine.
///
/// Reads run concurrently. A miss takes a per-query lock before calling the
/// engine, so concurrent misses on one query produce a single live call.
pub struct SearchService {
    cache: RwLock<SearchCache>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    engine: Option<Box<dyn SearchEngine>>,
    filter: FactCheckFilter,
    depth: usize,
    live_calls: AtomicUsize,
}

impl SearchService {
    pub fn new(cache: SearchCache, engine: Option<Box<dyn SearchEngine>>) -> Self {
        SearchService {
            cache: RwLock::new(cache),
            inflight: Mutex::new(HashMap::new()),
            engine,
            filter: FactCheckFilter::default(),
            depth: DEFAULT_FETCH_DEPTH,
            live_calls: AtomicUsize::new(0),
        }
    }

    /// Cache only; misses are errors regardless of the frozen flag.
    pub fn offline(cache: SearchCache) -> Self {
        Self::new(cache.frozen(true), None)
    }

    pub fn with_filter(mut self, filter: FactCheckFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth.max(1);
        self
    }

    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::SeqCst)
    }

    pub fn snapshot(&self) -> SearchCache {
        self.cache.read().expect("cache lock poisoned").clone()
    }

    pub fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if let Some(hits) = self.cache.read().expect("cache lock poisoned").lookup(query)? {
            return Ok(hits);
        }
        let Some(engine) = &self.engine else {
            return Err(SearchError::FrozenCacheMiss(normalize_query(query)));
        };
        let key = normalize_query(query);
        let gate = {
            let mut inflight = self.inflight.lock().expect("inflight lock poisoned");
            inflight.entry(key.clone()).or_default().clone()
        };
        let _held = gate.lock().expect("query lock poisoned");
        if let Some(hits) = self.cache.read().expect("cache lock poisoned").get(&key) {
            return Ok(hits.to_vec());
        }
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        let hits: Vec<SearchHit> =
            engine.search(query, self.depth)?.into_iter().filter(SearchHit::has_valid_url).collect();
        self.cache.write().expect("cache lock poisoned").insert(&key, hits.clone());
        Ok(hits)
    }

    /// Search, drop fact-check sources, keep the top snippet.
    pub fn evidence(&self, query: &str) -> Result<Option<EvidenceSnippet>, SearchError> {
        let hits = self.search(query)?;
        Ok(select_top_snippet(&self.filter.apply(&hits), query.trim()))
    }
}
