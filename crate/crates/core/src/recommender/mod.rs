//! Querying a recommender model with caching, rate limiting and batching.

mod cache;
mod live;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CacheEntry, ResponseCache};
pub use live::{AttemptRecord, LiveBackend, LiveConfig, RetryPolicy};
pub use synthetic::{SyntheticBackend, SyntheticBiasModel};

use crate::prompt::StudentProfile;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid query: {0}")]
    Spec(String),
    #[error("transport failed after {} attempt(s)", attempts.len())]
    Transport { attempts: Vec<AttemptRecord> },
    #[error("rate limited after {} attempt(s)", attempts.len())]
    RateLimited { attempts: Vec<AttemptRecord> },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("injected failure for {0}")]
    Injected(String),
    #[error("no cached response for {0} and no backend available")]
    CacheMiss(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Live,
    Cache,
    Synthetic,
}

/// Everything that determines a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub system_text: String,
    pub prompt_text: String,
    pub temperature: f64,
    pub model_name: String,
    pub profile: StudentProfile,
    pub replicate: u32,
    #[serde(default)]
    pub attempt: u32,
}

impl QuerySpec {
    pub fn validate(&self) -> Result<(), QueryError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(QueryError::Spec(format!("temperature {} outside [0,2]", self.temperature)));
        }
        if self.prompt_text.trim().is_empty() {
            return Err(QueryError::Spec("empty prompt".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(QueryError::Spec("empty model name".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the fields that identify the query.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            self.system_text.as_str(),
            self.prompt_text.as_str(),
            &format!("{:?}", self.temperature),
            self.model_name.as_str(),
            &self.replicate.to_string(),
            &self.attempt.to_string(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub query: QuerySpec,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub source: Source,
}

pub trait Backend: Send + Sync {
    /// Stable description used in run manifests.
    fn identity(&self) -> String;
    fn source(&self) -> Source;
    fn complete(&self, spec: &QuerySpec) -> Result<String, QueryError>;
}

/// Spaces dispatches at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    /// `per_minute` dispatches per minute; `None` when not positive.
    pub fn per_minute(per_minute: f64) -> Option<Self> {
        (per_minute.is_finite() && per_minute > 0.0).then(|| Self {
            interval: Duration::from_secs_f64(60.0 / per_minute),
            next: Mutex::new(Instant::now()),
        })
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub fn acquire(&self) {
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let slot = (*next).max(Instant::now());
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub struct RecommenderClient {
    backend: Option<Arc<dyn Backend>>,
    cache: Mutex<ResponseCache>,
    limiter: Option<RateLimiter>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for RecommenderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecommenderClient")
            .field("backend", &self.backend.as_ref().map(|b| b.identity()))
            .field("calls", &self.backend_calls())
            .finish()
    }
}

impl RecommenderClient {
    pub fn new(backend: Arc<dyn Backend>, cache: ResponseCache) -> Self {
        Self { backend: Some(backend), cache: Mutex::new(cache), limiter: None, calls: AtomicUsize::new(0) }
    }

    /// A client that only answers from the cache.
    pub fn cache_only(cache: ResponseCache) -> Self {
        Self { backend: None, cache: Mutex::new(cache), limiter: None, calls: AtomicUsize::new(0) }
    }

    pub fn with_rate_limit(mut self, per_minute: f64) -> Self {
        self.limiter = RateLimiter::per_minute(per_minute);
        self
    }

    pub fn backend_identity(&self) -> String {
        self.backend.as_ref().map_or_else(|| "cache-only".to_string(), |b| b.identity())
    }

    /// Number of backend calls made so far.
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    pub fn cache_file_hash(&self) -> Option<String> {
        self.cache.lock().expect("cache poisoned").file_hash()
    }

    fn cached(&self, spec: &QuerySpec) -> Option<RawResponse> {
        let cache = self.cache.lock().expect("cache poisoned");
        cache.get(&spec.key()).map(|e| RawResponse {
            query: spec.clone(),
            text: e.text.clone(),
            timestamp: e.timestamp,
            source: Source::Cache,
        })
    }

    /// Ask the backend without touching the cache.
    fn fetch(&self, spec: &QuerySpec) -> Result<RawResponse, QueryError> {
        let backend = self.backend.as_ref().ok_or_else(|| QueryError::CacheMiss(spec.key()))?;
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = backend.complete(spec)?;
        if text.trim().is_empty() {
            return Err(QueryError::Protocol("empty response text".into()));
        }
        Ok(RawResponse { query: spec.clone(), text, timestamp: Utc::now(), source: backend.source() })
    }

    fn store(&self, r: &RawResponse) -> Result<(), QueryError> {
        let entry = CacheEntry {
            key: r.query.key(),
            query: r.query.clone(),
            text: r.text.clone(),
            timestamp: r.timestamp,
            source: r.source,
        };
        self.cache.lock().expect("cache poisoned").append(entry).map_err(|e| QueryError::Cache(e.to_string()))
    }

    /// One query: cache first, then the backend. New responses are cached.
    pub fn query(&self, spec: &QuerySpec) -> Result<RawResponse, QueryError> {
        spec.validate()?;
        if let Some(hit) = self.cached(spec) {
            return Ok(hit);
        }
        let fresh = self.fetch(spec)?;
        self.store(&fresh)?;
        Ok(fresh)
    }

    /// Query many specs on up to `parallelism` threads.
    ///
    /// Results come back in input order. Specs sharing a cache key are
    /// fetched once. New responses are appended to the cache in input
    /// order as soon as every earlier spec has resolved, so the cache file
    /// layout does not depend on thread timing.
    pub fn run_batch(&self, specs: &[QuerySpec], parallelism: usize) -> Vec<Result<RawResponse, QueryError>> {
        let keys: Vec<String> = specs.iter().map(QuerySpec::key).collect();
        let mut first: HashMap<&str, usize> = HashMap::new();
        let mut work: Vec<usize> = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if !first.contains_key(k.as_str()) {
                first.insert(k, i);
                work.push(i);
            }
        }

        let slots: Vec<Mutex<Option<Result<RawResponse, QueryError>>>> = specs.iter().map(|_| Mutex::new(None)).collect();
        let committer = Mutex::new(Committer { next: 0, pending: BTreeMap::new() });
        let cursor = AtomicUsize::new(0);
        let threads = parallelism.clamp(1, work.len().max(1));

        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let w = cursor.fetch_add(1, Ordering::SeqCst);
                    let Some(&i) = work.get(w) else { break };
                    let spec = &specs[i];
                    let result = spec.validate().and_then(|_| match self.cached(spec) {
                        Some(hit) => Ok((hit, false)),
                        None => self.fetch(spec).map(|r| (r, true)),
                    });
                    let mut c = committer.lock().expect("committer poisoned");
                    c.pending.insert(w, (i, result));
                    loop {
                        let next = c.next;
                        let Some((i, result)) = c.pending.remove(&next) else { break };
                        let result = result.and_then(|(r, fresh)| {
                            if fresh {
                                self.store(&r)?;
                            }
                            Ok(r)
                        });
                        *slots[i].lock().expect("slot poisoned") = Some(result);
                        c.next += 1;
                    }
                });
            }
        });

        let resolved: Vec<Option<Result<RawResponse, QueryError>>> =
            slots.into_iter().map(|m| m.into_inner().expect("slot poisoned")).collect();
        (0..specs.len())
            .map(|i| match &resolved[i] {
                Some(r) => r.clone(),
                None => {
                    let j = first[keys[i].as_str()];
                    resolved[j].clone().expect("first occurrence resolved").map(|mut r| {
                        r.query = specs[i].clone();
                        r.source = Source::Cache;
                        r
                    })
                }
            })
            .collect()
    }
}

type Pending = (usize, Result<(RawResponse, bool), QueryError>);

struct Committer {
    next: usize,
    pending: BTreeMap<usize, Pending>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demographics::{DemographicValue, Demographics, Gender};
    use crate::prompt::Percentile;
    use crate::vocab::parse_recommendations;

    fn spec(replicate: u32) -> QuerySpec {
        QuerySpec {
            system_text: "sys".into(),
            prompt_text: "prompt".into(),
            temperature: 0.7,
            model_name: "m".into(),
            profile: StudentProfile::new(
                Demographics::with_value(DemographicValue::Gender(Gender::Female)),
                Percentile::new(40).unwrap(),
            ),
            replicate,
            attempt: 0,
        }
    }

    fn synthetic() -> Arc<dyn Backend> {
        Arc::new(SyntheticBackend::new(SyntheticBiasModel::default()).unwrap())
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = spec(0);
        let mut variants = vec![spec(1)];
        let mut v = base.clone();
        v.temperature = 1.0;
        variants.push(v);
        let mut v = base.clone();
        v.system_text.push('!');
        variants.push(v);
        let mut v = base.clone();
        v.attempt = 1;
        variants.push(v);
        let mut v = base.clone();
        v.model_name = "n".into();
        variants.push(v);
        for v in variants {
            assert_ne!(v.key(), base.key());
        }
        assert_eq!(base.key(), spec(0).key());
    }

    #[test]
    fn temperature_is_validated() {
        let mut s = spec(0);
        s.temperature = 2.5;
        let client = RecommenderClient::new(synthetic(), ResponseCache::in_memory());
        assert!(matches!(client.query(&s), Err(QueryError::Spec(_))));
    }

    #[test]
    fn synthetic_output_parses_and_is_deterministic() {
        let b = synthetic();
        let a = b.complete(&spec(3)).unwrap();
        assert_eq!(a, b.complete(&spec(3)).unwrap());
        assert_eq!(parse_recommendations(&a).unwrap().len(), 10);
    }

    #[test]
    fn cache_hits_skip_backend() {
        let client = RecommenderClient::new(synthetic(), ResponseCache::in_memory());
        let first = client.query(&spec(0)).unwrap();
        assert_eq!(first.source, Source::Synthetic);
        let again = client.query(&spec(0)).unwrap();
        assert_eq!(again.source, Source::Cache);
        assert_eq!(again.text, first.text);
        assert_eq!(client.backend_calls(), 1);
    }

    #[test]
    fn cache_only_misses() {
        let client = RecommenderClient::cache_only(ResponseCache::in_memory());
        assert!(matches!(client.query(&spec(0)), Err(QueryError::CacheMiss(_))));
    }

    #[test]
    fn batch_keeps_order_and_isolates_failures() {
        let mut model = SyntheticBiasModel::default();
        model.fail_keys.insert(spec(2).key());
        let client = RecommenderClient::new(Arc::new(SyntheticBackend::new(model).unwrap()), ResponseCache::in_memory());
        let specs: Vec<QuerySpec> = (0..6).map(spec).collect();
        let out = client.run_batch(&specs, 4);
        assert_eq!(out.len(), 6);
        for (i, r) in out.iter().enumerate() {
            if i == 2 {
                assert!(matches!(r, Err(QueryError::Injected(_))));
            } else {
                assert_eq!(r.as_ref().unwrap().query.replicate, i as u32);
            }
        }
        assert_eq!(client.cache_len(), 5);
    }

    #[test]
    fn batch_dedupes_keys() {
        let client = RecommenderClient::new(synthetic(), ResponseCache::in_memory());
        let specs = vec![spec(0), spec(0), spec(1)];
        let out = client.run_batch(&specs, 3);
        assert_eq!(client.backend_calls(), 2);
        assert_eq!(out[0].as_ref().unwrap().text, out[1].as_ref().unwrap().text);
        assert_eq!(out[1].as_ref().unwrap().source, Source::Cache);
    }

    #[test]
    fn cache_file_persists_and_tolerates_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        {
            let client = RecommenderClient::new(synthetic(), ResponseCache::open(&path).unwrap());
            client.run_batch(&[spec(0), spec(1)], 2);
        }
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"{\"key\":\"trunc");
        std::fs::write(&path, bytes).unwrap();
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.skipped_lines, vec![3]);
        let client = RecommenderClient::cache_only(cache);
        assert_eq!(client.query(&spec(1)).unwrap().source, Source::Cache);
    }

    #[test]
    fn cache_order_is_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let specs: Vec<QuerySpec> = (0..20).map(spec).collect();
        let client = RecommenderClient::new(synthetic(), ResponseCache::open(&path).unwrap());
        client.run_batch(&specs, 8);
        let cache = ResponseCache::open(&path).unwrap();
        let reps: Vec<u32> = cache.entries().map(|e| e.query.replicate).collect();
        assert_eq!(reps, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn rate_limit_spaces_dispatches() {
        let client = RecommenderClient::new(synthetic(), ResponseCache::in_memory()).with_rate_limit(60_000.0 / 20.0);
        let specs: Vec<QuerySpec> = (0..6).map(spec).collect();
        let t = Instant::now();
        client.run_batch(&specs, 6);
        // 6 dispatches, 20 ms apart: at least 100 ms.
        assert!(t.elapsed() >= Duration::from_millis(100));
    }

    #[test]
    fn retry_delay_doubles_and_caps() {
        let p = RetryPolicy { max_attempts: 5, base_delay_ms: 100, max_delay_ms: 350 };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }
}
