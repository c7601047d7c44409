//! OpenAI-compatible HTTP backend over `reqwest::blocking`.
//!
//! Speaks `POST {base_url}/chat/completions` and reads
//! `choices[0].message.content`. API keys are resolved from the environment
//! variable named by the endpoint (never stored in config files) and are
//! never logged. `reasoning_effort` is only sent to model families that
//! accept it; other servers reject unknown fields.

use super::{BackendError, ChatBackend, ModelEndpoint};
use crate::types::ChatMessage;
use serde::Deserialize;
use serde_json::json;

pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
}

impl Default for OpenAiBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl OpenAiBackend {
    pub fn new() -> Self {
        // Per-request timeouts come from the endpoint, not the client.
        let client = reqwest::blocking::Client::builder()
            .build()
            .expect("TLS-capable HTTP client");
        Self { client }
    }

    fn api_key(endpoint: &ModelEndpoint) -> Result<Option<String>, BackendError> {
        match &endpoint.api_key_ref {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(BackendError::Auth {
                    detail: format!("environment variable {var} is unset or empty"),
                }),
            },
        }
    }

    fn map_transport(e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout
        } else {
            // reqwest error Display includes the URL but never headers.
            BackendError::Transport { detail: e.to_string() }
        }
    }
}

/// Whether this model family accepts a `reasoning_effort` parameter:
/// reasoning-series names like `o3` / `o4-mini`, and `gpt-5` variants.
pub fn accepts_reasoning_effort(model_name: &str) -> bool {
    let name = model_name.to_ascii_lowercase();
    let o_series = name
        .strip_prefix('o')
        .map(|rest| rest.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .unwrap_or(false);
    o_series || name.contains("gpt-5")
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

fn joined_url(base_url: &str, path: &str) -> String {
    format!("{}/{}", base_url.trim_end_matches('/'), path)
}

impl ChatBackend for OpenAiBackend {
    fn complete_once(
        &self,
        endpoint: &ModelEndpoint,
        messages: &[ChatMessage],
        _cache_key: &str,
    ) -> Result<String, BackendError> {
        let mut body = json!({
            "model": endpoint.model_name,
            "messages": messages,
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens,
        });
        if let Some(effort) = endpoint.reasoning_effort {
            if accepts_reasoning_effort(&endpoint.model_name) {
                body["reasoning_effort"] = json!(effort);
            }
        }

        let url = joined_url(&endpoint.base_url, "chat/completions");
        log::debug!("POST {url} model={}", endpoint.model_name);
        let mut request = self
            .client
            .post(&url)
            .timeout(endpoint.request_timeout)
            .json(&body);
        if let Some(key) = Self::api_key(endpoint)? {
            request = request.bearer_auth(key);
        }

        let response = request.send().map_err(Self::map_transport)?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth {
                detail: format!("{url} answered {status}"),
            });
        }
        if !status.is_success() {
            let mut body = response.text().unwrap_or_default();
            body.truncate(2000);
            return Err(BackendError::Status { code: status.as_u16(), body });
        }

        let parsed: CompletionBody = response
            .json()
            .map_err(|e| BackendError::Transport { detail: format!("malformed response body: {e}") })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport {
                detail: "response has no choices[0].message.content".to_owned(),
            })
    }

    /// GET `{base_url}/models` to fail fast on unreachable or misconfigured
    /// endpoints before a cold run burns through its budget.
    fn preflight(&self, endpoint: &ModelEndpoint) -> Result<(), BackendError> {
        let url = joined_url(&endpoint.base_url, "models");
        log::debug!("GET {url}");
        let mut request = self.client.get(&url).timeout(endpoint.request_timeout);
        if let Some(key) = Self::api_key(endpoint)? {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(Self::map_transport)?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth {
                detail: format!("{url} answered {status}"),
            });
        }
        if !status.is_success() {
            return Err(BackendError::Status {
                code: status.as_u16(),
                body: format!("preflight {url}"),
            });
        }
        Ok(())
    }
}
