//! Model access: endpoints, caching, retries, and concurrency limits.
//!
//! Every completion goes through a [`Gateway`], which owns one
//! [`ModelEndpoint`] and a pluggable [`ChatBackend`] (live HTTP or
//! scripted). The gateway checks the disk cache, bounds in-flight requests
//! with a per-endpoint semaphore, retries transient failures with
//! exponential backoff, and persists successful exchanges atomically.
//!
//! Cache keys cover exactly the request semantics — model name, sampling
//! parameters, and messages — and deliberately exclude the base URL, so a
//! corpus scored against one deployment of a model replays for free against
//! another deployment of the same model.

pub mod cache;
pub mod http;
pub mod repair;
pub mod scripted;

use crate::types::ChatMessage;
use cache::{CacheError, CachedExchange, DiskCache};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Medium,
    High,
}

/// One model behind one OpenAI-compatible server, plus the client-side
/// policies (timeout, retries, concurrency) for talking to it.
#[derive(Debug, Clone)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in config files or on disk.
    pub api_key_ref: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub reasoning_effort: Option<ReasoningEffort>,
    pub request_timeout: Duration,
    /// Retries after the first attempt; total attempts = max_retries + 1.
    pub max_retries: u32,
    pub max_concurrency: usize,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_ref: None,
            temperature: 0.0,
            max_tokens: 1024,
            reasoning_effort: None,
            request_timeout: Duration::from_secs(60),
            max_retries: 2,
            max_concurrency: 4,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let fail = |detail: String| Err(GatewayError::Config { detail });
        if self.base_url.trim().is_empty() {
            return fail("base_url is empty".into());
        }
        if self.model_name.trim().is_empty() {
            return fail("model_name is empty".into());
        }
        if self.max_retries > 10 {
            return fail(format!("max_retries {} exceeds limit 10", self.max_retries));
        }
        if self.max_concurrency < 1 {
            return fail("max_concurrency must be at least 1".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return fail(format!("temperature {} is invalid", self.temperature));
        }
        Ok(())
    }

    pub fn summary(&self) -> EndpointSummary {
        EndpointSummary {
            base_url: self.base_url.clone(),
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            reasoning_effort: self.reasoning_effort,
        }
    }

    /// A placeholder endpoint for scripted-backend tests.
    pub fn scripted_for_tests(model_name: impl Into<String>) -> Self {
        Self::new("scripted://local", model_name)
    }
}

/// The slice of endpoint configuration worth echoing into run manifests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EndpointSummary {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub reasoning_effort: Option<ReasoningEffort>,
}

/// One completed request/response, as consumers see it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<ChatMessage>,
    pub raw_response: String,
    pub cache_key: String,
    /// Attempts spent on the wire: 0 for a cache hit, 1 for a first-try
    /// success, 3 for two failures then a success.
    pub attempt_count: u32,
}

/// Failure of a single attempt, before retry policy is applied.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {detail}")]
    Transport { detail: String },
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("authentication failed: {detail}")]
    Auth { detail: String },
    #[error("no scripted response for request (messages digest {digest})")]
    Unscripted { digest: String },
}

impl BackendError {
    /// Transient failures are worth retrying; client errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } | BackendError::Timeout => true,
            BackendError::Status { code, .. } => *code == 429 || *code >= 500,
            BackendError::Auth { .. } | BackendError::Unscripted { .. } => false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("chat completion failed after {attempts} attempt(s): {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("endpoint preflight failed: {source}")]
    Preflight {
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("endpoint configuration invalid: {detail}")]
    Config { detail: String },
}

/// A single-attempt completion provider. Retries, caching, and concurrency
/// limits live in [`Gateway`], so backends stay trivial to script.
pub trait ChatBackend: Send + Sync {
    fn complete_once(
        &self,
        endpoint: &ModelEndpoint,
        messages: &[ChatMessage],
        cache_key: &str,
    ) -> Result<String, BackendError>;

    /// Cheap reachability check; backends without a wire protocol accept.
    fn preflight(&self, _endpoint: &ModelEndpoint) -> Result<(), BackendError> {
        Ok(())
    }
}

/// Derives the cache key for a request: SHA-256 over the canonical JSON of
/// exactly (model_name, temperature, max_tokens, reasoning_effort,
/// messages). Anything else — base URL, API key, retry policy — is
/// deployment detail and must not change the key.
pub fn cache_key(endpoint: &ModelEndpoint, messages: &[ChatMessage]) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model_name: &'a str,
        temperature: f64,
        max_tokens: u32,
        reasoning_effort: Option<ReasoningEffort>,
        messages: &'a [ChatMessage],
    }
    let material = KeyMaterial {
        model_name: &endpoint.model_name,
        temperature: endpoint.temperature,
        max_tokens: endpoint.max_tokens,
        reasoning_effort: endpoint.reasoning_effort,
        messages,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// SHA-256 of the serialized messages alone; used to identify unscripted
/// requests in errors without dumping whole prompts.
pub fn messages_digest(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Counting semaphore: caps in-flight requests per endpoint.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.available.notify_one();
    }
}

pub struct Gateway {
    endpoint: ModelEndpoint,
    backend: Arc<dyn ChatBackend>,
    cache: Option<DiskCache>,
    semaphore: Semaphore,
    retry_base: Duration,
}

impl Gateway {
    pub fn new(
        endpoint: ModelEndpoint,
        backend: Arc<dyn ChatBackend>,
        cache: Option<DiskCache>,
    ) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let semaphore = Semaphore::new(endpoint.max_concurrency);
        Ok(Self {
            endpoint,
            backend,
            cache,
            semaphore,
            retry_base: Duration::from_millis(250),
        })
    }

    /// Shrinks the backoff base; tests exercising retry flows use this so
    /// scripted failures do not actually wait.
    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    /// Runs the backend's reachability check, but only when this endpoint's
    /// cache holds nothing — a warm replay must work fully offline.
    pub fn preflight_if_cold(&self) -> Result<(), GatewayError> {
        let warm = self
            .cache
            .as_ref()
            .is_some_and(|c| c.has_entries(&self.endpoint.model_name));
        if warm {
            return Ok(());
        }
        self.backend
            .preflight(&self.endpoint)
            .map_err(|source| GatewayError::Preflight { source })
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<ChatExchange, GatewayError> {
        let key = cache_key(&self.endpoint, messages);

        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.load(&self.endpoint.model_name, &key)? {
                return Ok(ChatExchange {
                    messages: messages.to_vec(),
                    raw_response: hit.raw_response,
                    cache_key: key,
                    attempt_count: 0,
                });
            }
        }

        let _permit = self.semaphore.acquire();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.complete_once(&self.endpoint, messages, &key) {
                Ok(raw_response) => {
                    if let Some(cache) = &self.cache {
                        let entry = CachedExchange {
                            messages: messages.to_vec(),
                            raw_response: raw_response.clone(),
                        };
                        cache.store(&self.endpoint.model_name, &key, &entry)?;
                    }
                    return Ok(ChatExchange {
                        messages: messages.to_vec(),
                        raw_response,
                        cache_key: key,
                        attempt_count: attempt,
                    });
                }
                Err(source) => {
                    let attempts_left = attempt <= self.endpoint.max_retries;
                    if source.is_retryable() && attempts_left {
                        let backoff = self.retry_base * 2u32.saturating_pow(attempt - 1);
                        log::debug!(
                            "attempt {attempt} for {} failed ({source}); retrying in {backoff:?}",
                            self.endpoint.model_name
                        );
                        std::thread::sleep(backoff);
                        continue;
                    }
                    return Err(GatewayError::Backend { attempts: attempt, source });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::scripted::{ScriptKey, ScriptResponse, ScriptRule, ScriptedBackend};
    use super::*;
    use crate::types::ChatMessage;

    fn msgs(content: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user(content)]
    }

    #[test]
    fn cache_key_is_stable_and_sensitive_to_request_semantics() {
        let ep = ModelEndpoint::new("https://a.example/v1", "gpt-4o");
        let base = cache_key(&ep, &msgs("hello"));
        assert_eq!(base, cache_key(&ep, &msgs("hello")), "same request, same key");
        assert_eq!(base.len(), 64);

        assert_ne!(base, cache_key(&ep, &msgs("hello ")), "whitespace matters");
        assert_ne!(
            base,
            cache_key(&ep, &[ChatMessage::user("hello"), ChatMessage::system("sys")]),
            "message order matters"
        );

        let mut hotter = ep.clone();
        hotter.temperature = 0.7;
        assert_ne!(base, cache_key(&hotter, &msgs("hello")));

        let mut longer = ep.clone();
        longer.max_tokens = 2048;
        assert_ne!(base, cache_key(&longer, &msgs("hello")));

        let mut effortful = ep.clone();
        effortful.reasoning_effort = Some(ReasoningEffort::Medium);
        assert_ne!(base, cache_key(&effortful, &msgs("hello")));

        let mut renamed = ep.clone();
        renamed.model_name = "gpt-4o-mini".into();
        assert_ne!(base, cache_key(&renamed, &msgs("hello")));
    }

    #[test]
    fn cache_key_ignores_deployment_details() {
        let ep = ModelEndpoint::new("https://a.example/v1", "gpt-4o");
        let mut moved = ep.clone();
        moved.base_url = "http://localhost:8000/v1".into();
        moved.api_key_ref = Some("OTHER_KEY".into());
        moved.max_retries = 9;
        moved.max_concurrency = 32;
        moved.request_timeout = Duration::from_secs(5);
        assert_eq!(cache_key(&ep, &msgs("hello")), cache_key(&moved, &msgs("hello")));
    }

    #[test]
    fn endpoint_validation_rejects_bad_policies() {
        let mut ep = ModelEndpoint::new("https://a.example/v1", "m");
        ep.max_retries = 11;
        assert!(matches!(
            Gateway::new(ep, Arc::new(ScriptedBackend::new(vec![])), None),
            Err(GatewayError::Config { .. })
        ));

        let mut ep = ModelEndpoint::new("https://a.example/v1", "m");
        ep.max_concurrency = 0;
        assert!(ModelEndpoint::validate(&ep).is_err());

        assert!(ModelEndpoint::new("", "m").validate().is_err());
        assert!(ModelEndpoint::new("https://a.example/v1", " ").validate().is_err());
    }

    #[test]
    fn first_try_success_counts_one_attempt() {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::content(
            ScriptKey::Fallback,
            "ok",
        )]));
        let gw = Gateway::new(ModelEndpoint::scripted_for_tests("m"), backend, None).unwrap();
        let exchange = gw.complete(&msgs("hi")).unwrap();
        assert_eq!(exchange.attempt_count, 1);
        assert_eq!(exchange.raw_response, "ok");
    }

    #[test]
    fn rate_limits_then_success_counts_three_attempts() {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::new(
            ScriptKey::Fallback,
            vec![
                ScriptResponse::Status(429),
                ScriptResponse::Status(429),
                ScriptResponse::Content("ok".into()),
            ],
        )]));
        let gw = Gateway::new(ModelEndpoint::scripted_for_tests("m"), backend.clone(), None)
            .unwrap()
            .with_retry_base(Duration::from_millis(1));
        let exchange = gw.complete(&msgs("hi")).unwrap();
        assert_eq!(exchange.attempt_count, 3);
        assert_eq!(backend.call_count(), 3);
    }

    #[test]
    fn transport_failures_exhaust_retries() {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::new(
            ScriptKey::Fallback,
            vec![ScriptResponse::TransportError],
        )]));
        let mut ep = ModelEndpoint::scripted_for_tests("m");
        ep.max_retries = 2;
        let gw = Gateway::new(ep, backend.clone(), None)
            .unwrap()
            .with_retry_base(Duration::from_millis(1));
        match gw.complete(&msgs("hi")) {
            Err(GatewayError::Backend { attempts, source }) => {
                assert_eq!(attempts, 3, "max_retries 2 means three attempts");
                assert!(matches!(source, BackendError::Transport { .. }));
            }
            other => panic!("expected backend error, got {other:?}"),
        }
        assert_eq!(backend.call_count(), 3);
    }

    #[test]
    fn client_errors_do_not_retry() {
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::new(
            ScriptKey::Fallback,
            vec![ScriptResponse::Status(400)],
        )]));
        let gw = Gateway::new(ModelEndpoint::scripted_for_tests("m"), backend.clone(), None)
            .unwrap()
            .with_retry_base(Duration::from_millis(1));
        match gw.complete(&msgs("hi")) {
            Err(GatewayError::Backend { attempts, source }) => {
                assert_eq!(attempts, 1);
                assert!(matches!(source, BackendError::Status { code: 400, .. }));
            }
            other => panic!("expected backend error, got {other:?}"),
        }
        assert_eq!(backend.call_count(), 1);
    }

    #[test]
    fn cache_hit_skips_the_backend_entirely() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(ScriptedBackend::new(vec![ScriptRule::content(
            ScriptKey::Fallback,
            r#"{"score": 4}"#,
        )]));
        let make_gw = || {
            Gateway::new(
                ModelEndpoint::scripted_for_tests("m"),
                backend.clone(),
                Some(DiskCache::new(dir.path())),
            )
            .unwrap()
        };

        let cold = make_gw().complete(&msgs("hi")).unwrap();
        assert_eq!(cold.attempt_count, 1);
        assert_eq!(backend.call_count(), 1);

        let warm = make_gw().complete(&msgs("hi")).unwrap();
        assert_eq!(warm.attempt_count, 0, "cache hit means zero attempts");
        assert_eq!(warm.raw_response, cold.raw_response);
        assert_eq!(warm.cache_key, cold.cache_key);
        assert_eq!(backend.call_count(), 1, "no new backend call");

        // A different request still goes to the backend.
        let other = make_gw().complete(&msgs("different")).unwrap();
        assert_eq!(other.attempt_count, 1);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn semaphore_caps_in_flight_requests() {
        let backend = Arc::new(
            ScriptedBackend::new(vec![ScriptRule::content(ScriptKey::Fallback, "ok")])
                .with_latency(Duration::from_millis(25)),
        );
        let mut ep = ModelEndpoint::scripted_for_tests("m");
        ep.max_concurrency = 2;
        let gw = Arc::new(Gateway::new(ep, backend.clone(), None).unwrap());

        let handles: Vec<_> = (0..8)
            .map(|i| {
                let gw = Arc::clone(&gw);
                std::thread::spawn(move || {
                    gw.complete(&msgs(&format!("call {i}"))).unwrap();
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let peak = backend.max_in_flight();
        assert!(peak <= 2, "semaphore let {peak} requests through");
        assert!(peak >= 2, "latency should force overlap, saw {peak}");
    }

    #[test]
    fn preflight_runs_only_on_cold_cache() {
        use std::sync::atomic::{AtomicUsize, Ordering};

        #[derive(Default)]
        struct CountingBackend {
            preflights: AtomicUsize,
        }
        impl ChatBackend for CountingBackend {
            fn complete_once(
                &self,
                _endpoint: &ModelEndpoint,
                _messages: &[ChatMessage],
                _cache_key: &str,
            ) -> Result<String, BackendError> {
                Ok("ok".into())
            }
            fn preflight(&self, _endpoint: &ModelEndpoint) -> Result<(), BackendError> {
                self.preflights.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
        }

        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(CountingBackend::default());
        let make_gw = || {
            Gateway::new(
                ModelEndpoint::scripted_for_tests("m"),
                backend.clone(),
                Some(DiskCache::new(dir.path())),
            )
            .unwrap()
        };

        let gw = make_gw();
        gw.preflight_if_cold().unwrap();
        assert_eq!(backend.preflights.load(Ordering::SeqCst), 1, "cold cache preflights");
        gw.complete(&msgs("hi")).unwrap();

        make_gw().preflight_if_cold().unwrap();
        assert_eq!(
            backend.preflights.load(Ordering::SeqCst),
            1,
            "warm cache skips preflight"
        );
    }
}
