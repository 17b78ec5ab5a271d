//! Chat-completions backend over HTTPS with retry and backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, QueryError, QuerySpec, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based), doubling each time.
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

/// One HTTP attempt, kept for error reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptRecord {
    pub status: Option<u16>,
    pub message: String,
    pub waited_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    /// Environment variable that holds the bearer token.
    pub credential_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            credential_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug)]
pub struct LiveBackend {
    config: LiveConfig,
    token: String,
    http: reqwest::blocking::Client,
}

impl LiveBackend {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(config: LiveConfig) -> Result<Self, QueryError> {
        let token = std::env::var(&config.credential_env)
            .ok()
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| QueryError::Config(format!("credential variable {} is not set", config.credential_env)))?;
        Self::with_token(config, token)
    }

    pub fn with_token(config: LiveConfig, token: String) -> Result<Self, QueryError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| QueryError::Config(format!("http client: {e}")))?;
        Ok(Self { config, token, http })
    }

    fn body(spec: &QuerySpec) -> serde_json::Value {
        json!({
            "model": spec.model_name,
            "temperature": spec.temperature,
            "messages": [
                {"role": "system", "content": spec.system_text},
                {"role": "user", "content": spec.prompt_text},
            ],
        })
    }
}

fn retry_after(resp: &reqwest::blocking::Response) -> Option<Duration> {
    let raw = resp.headers().get(reqwest::header::RETRY_AFTER)?.to_str().ok()?;
    raw.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

fn extract_content(v: &serde_json::Value) -> Option<String> {
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

impl Backend for LiveBackend {
    fn identity(&self) -> String {
        format!("live({})", self.config.endpoint)
    }

    fn source(&self) -> Source {
        Source::Live
    }

    fn complete(&self, spec: &QuerySpec) -> Result<String, QueryError> {
        let policy = &self.config.retry;
        let mut log: Vec<AttemptRecord> = Vec::new();
        let attempts = policy.max_attempts.max(1);
        for n in 0..attempts {
            let sent = self.http.post(&self.config.endpoint).bearer_auth(&self.token).json(&Self::body(spec)).send();
            let (status, message, hint) = match sent {
                Ok(resp) => {
                    let status = resp.status();
                    let hint = retry_after(&resp);
                    if status.is_success() {
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| QueryError::Protocol(format!("response body is not JSON: {e}")))?;
                        return extract_content(&value)
                            .ok_or_else(|| QueryError::Protocol("response has no choices[0].message.content".into()));
                    }
                    let text = resp.text().unwrap_or_default();
                    let retryable = status.as_u16() == 429 || status.as_u16() == 408 || status.is_server_error();
                    if !retryable {
                        log.push(AttemptRecord { status: Some(status.as_u16()), message: text, waited_ms: 0 });
                        return Err(QueryError::Transport { attempts: log });
                    }
                    (Some(status.as_u16()), text, hint)
                }
                Err(e) => (None, e.to_string(), None),
            };
            let wait = if n + 1 < attempts { hint.unwrap_or_else(|| policy.delay(n)) } else { Duration::ZERO };
            log::debug!("attempt {} failed ({status:?}): retrying in {wait:?}", n + 1);
            log.push(AttemptRecord { status, message, waited_ms: wait.as_millis() as u64 });
            std::thread::sleep(wait);
        }
        if log.iter().all(|a| a.status == Some(429)) {
            Err(QueryError::RateLimited { attempts: log })
        } else {
            Err(QueryError::Transport { attempts: log })
        }
    }
}
