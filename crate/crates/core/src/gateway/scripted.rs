//! A scripted chat backend for offline runs and tests.
//!
//! Rules are matched against the *content* of each request (first match
//! wins), not against call order — pipeline stages may run data-parallel, so
//! arrival order is not deterministic but request content is. Each rule
//! carries a response sequence consumed per matching call, letting tests
//! script flows like "429, 429, then success". Every call is recorded, and
//! an in-flight counter exposes the maximum concurrency actually reached.

use super::{messages_digest, BackendError, ChatBackend, ModelEndpoint};
use crate::types::ChatMessage;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

/// How a rule decides whether it matches a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptKey {
    /// Exact cache-key match.
    CacheKey(String),
    /// Some message contains this needle.
    MessageContains(String),
    /// Every needle appears in some message.
    AllOf(Vec<String>),
    /// Matches anything.
    Fallback,
}

impl ScriptKey {
    fn matches(&self, cache_key: &str, messages: &[ChatMessage]) -> bool {
        let contains = |needle: &str| messages.iter().any(|m| m.content.contains(needle));
        match self {
            ScriptKey::CacheKey(key) => key == cache_key,
            ScriptKey::MessageContains(needle) => contains(needle),
            ScriptKey::AllOf(needles) => needles.iter().all(|n| contains(n)),
            ScriptKey::Fallback => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptResponse {
    /// Successful completion with this body.
    Content(String),
    /// HTTP-style status failure (429 and 5xx retry, other 4xx do not).
    Status(u16),
    /// Connection-level failure.
    TransportError,
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub key: ScriptKey,
    pub responses: Vec<ScriptResponse>,
    /// Keep serving the last response once the sequence is exhausted.
    pub repeat_last: bool,
}

impl ScriptRule {
    pub fn new(key: ScriptKey, responses: Vec<ScriptResponse>) -> Self {
        Self { key, responses, repeat_last: true }
    }

    pub fn once_each(key: ScriptKey, responses: Vec<ScriptResponse>) -> Self {
        Self { key, responses, repeat_last: false }
    }

    pub fn content(key: ScriptKey, body: impl Into<String>) -> Self {
        Self::new(key, vec![ScriptResponse::Content(body.into())])
    }
}

/// One observed request, kept for post-run assertions.
#[derive(Debug, Clone)]
pub struct RecordedCall {
    pub model_name: String,
    pub cache_key: String,
    pub matched_rule: Option<usize>,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    consumed: Mutex<Vec<usize>>,
    calls: Mutex<Vec<RecordedCall>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    latency: Option<Duration>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let consumed = Mutex::new(vec![0; rules.len()]);
        Self { rules, consumed, ..Self::default() }
    }

    /// Sleep this long inside every call; makes concurrency observable and
    /// gives benches a realistic per-call cost.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    /// Calls whose messages contain `needle`.
    pub fn calls_containing(&self, needle: &str) -> usize {
        self.calls
            .lock()
            .unwrap()
            .iter()
            .filter(|c| c.messages.iter().any(|m| m.content.contains(needle)))
            .count()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    /// Clears the observation state (recorded calls and the concurrency
    /// high-water mark); scripted rule cursors are behavior, not probes,
    /// and keep advancing.
    pub fn reset_probe(&self) {
        self.calls.lock().unwrap().clear();
        self.max_in_flight.store(0, Ordering::SeqCst);
    }

    pub fn load_script(path: &Path) -> Result<Self, BackendError> {
        let bytes = std::fs::read(path).map_err(|e| BackendError::Transport {
            detail: format!("script file {}: {e}", path.display()),
        })?;
        let file: ScriptFile =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Transport {
                detail: format!("script file {}: {e}", path.display()),
            })?;
        Ok(Self::new(file.into_rules()))
    }
}

/// Decrements the in-flight gauge even on early return.
struct InFlightGuard<'a>(&'a AtomicUsize);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete_once(
        &self,
        endpoint: &ModelEndpoint,
        messages: &[ChatMessage],
        cache_key: &str,
    ) -> Result<String, BackendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        let _guard = InFlightGuard(&self.in_flight);

        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }

        let matched = self
            .rules
            .iter()
            .position(|rule| rule.key.matches(cache_key, messages));
        self.calls.lock().unwrap().push(RecordedCall {
            model_name: endpoint.model_name.clone(),
            cache_key: cache_key.to_owned(),
            matched_rule: matched,
            messages: messages.to_vec(),
        });

        let Some(index) = matched else {
            return Err(BackendError::Unscripted { digest: messages_digest(messages) });
        };
        let rule = &self.rules[index];
        let seq = {
            let mut consumed = self.consumed.lock().unwrap();
            let seq = consumed[index];
            consumed[index] += 1;
            seq
        };
        let response = if seq < rule.responses.len() {
            &rule.responses[seq]
        } else if rule.repeat_last && !rule.responses.is_empty() {
            rule.responses.last().unwrap()
        } else {
            return Err(BackendError::Unscripted { digest: messages_digest(messages) });
        };
        match response {
            ScriptResponse::Content(body) => Ok(body.clone()),
            ScriptResponse::Status(code) => Err(BackendError::Status {
                code: *code,
                body: format!("scripted status {code}"),
            }),
            ScriptResponse::TransportError => Err(BackendError::Transport {
                detail: "scripted transport failure".to_owned(),
            }),
        }
    }
}

// --- serde form, for script files used by the CLI's scripted endpoints ---

#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptFile {
    pub rules: Vec<ScriptFileRule>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptFileRule {
    /// All listed needles must appear; empty or absent means match anything.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when_contains: Vec<String>,
    pub responses: Vec<ScriptFileResponse>,
    #[serde(default = "default_true")]
    pub repeat: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptFileResponse {
    Content { content: String },
    Status { status: u16 },
    Transport { transport_error: bool },
}

impl ScriptFile {
    pub fn into_rules(self) -> Vec<ScriptRule> {
        self.rules
            .into_iter()
            .map(|rule| {
                let key = match rule.when_contains.len() {
                    0 => ScriptKey::Fallback,
                    1 => ScriptKey::MessageContains(rule.when_contains.into_iter().next().unwrap()),
                    _ => ScriptKey::AllOf(rule.when_contains),
                };
                let responses = rule
                    .responses
                    .into_iter()
                    .map(|r| match r {
                        ScriptFileResponse::Content { content } => ScriptResponse::Content(content),
                        ScriptFileResponse::Status { status } => ScriptResponse::Status(status),
                        ScriptFileResponse::Transport { .. } => ScriptResponse::TransportError,
                    })
                    .collect();
                ScriptRule { key, responses, repeat_last: rule.repeat }
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("script serializes"))
    }
}
