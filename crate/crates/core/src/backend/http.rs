use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationRequest, ModelKind};

/// Bounded exponential backoff, applied to transport failures only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

#[derive(Serialize)]
pub(crate) struct WireRequest<'a> {
    pub model: ModelKind,
    pub inputs: &'a [String],
    pub max_length: u32,
    pub num_beams: u32,
    pub length_penalty: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    outputs: Vec<String>,
}

#[derive(Deserialize)]
struct HealthResponse {
    status: String,
}

/// Request body bytes for `POST /v1/generate`.
pub(crate) fn encode_request(model: ModelKind, request: &GenerationRequest) -> Vec<u8> {
    serde_json::to_vec(&WireRequest {
        model,
        inputs: &request.inputs,
        max_length: request.max_length,
        num_beams: request.num_beams,
        length_penalty: request.length_penalty,
    })
    .expect("request serializes")
}

enum Attempt {
    Done(Vec<String>),
    Retry(String),
    Fail(BackendError),
}

/// Client for a model server speaking the `/v1/generate` protocol.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>) -> Result<Self, BackendError> {
        Self::with_options(base_url, RetryPolicy::default(), Duration::from_secs(600))
    }

    pub fn with_options(
        base_url: impl Into<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            retry,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// `GET /health`; true when the server reports `{"status":"ok"}`.
    pub fn health(&self) -> Result<bool, BackendError> {
        let response = self
            .client
            .get(format!("{}/health", self.base_url))
            .send()
            .map_err(|e| BackendError::Transport {
                attempts: 1,
                message: e.to_string(),
            })?;
        if response.status() == StatusCode::SERVICE_UNAVAILABLE {
            return Ok(false);
        }
        if !response.status().is_success() {
            return Err(BackendError::Protocol(format!("/health returned {}", response.status())));
        }
        let body = response.bytes().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let health: HealthResponse = serde_json::from_slice(&body)
            .map_err(|e| BackendError::Protocol(format!("malformed /health body: {e}")))?;
        Ok(health.status == "ok")
    }

    fn attempt(&self, body: &[u8], expected: usize) -> Attempt {
        let sent = self
            .client
            .post(format!("{}/v1/generate", self.base_url))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec())
            .send();
        let response = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        let bytes = match response.bytes() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == StatusCode::SERVICE_UNAVAILABLE {
            return Attempt::Retry("503 model loading".into());
        }
        if !status.is_success() {
            let text = String::from_utf8_lossy(&bytes);
            return Attempt::Fail(BackendError::Protocol(format!("server returned {status}: {text}")));
        }
        let parsed: WireResponse = match serde_json::from_slice(&bytes) {
            Ok(p) => p,
            Err(e) => return Attempt::Fail(BackendError::Protocol(format!("malformed response: {e}"))),
        };
        if parsed.outputs.len() != expected {
            return Attempt::Fail(BackendError::Protocol(format!(
                "{} outputs for {} inputs",
                parsed.outputs.len(),
                expected
            )));
        }
        Attempt::Done(parsed.outputs)
    }
}

impl Backend for HttpBackend {
    fn generate(&self, model: ModelKind, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        let body = encode_request(model, request);
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body, request.inputs.len()) {
                Attempt::Done(outputs) => return Ok(outputs),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(message) => {
                    if attempt < attempts {
                        let delay = self.retry.backoff(attempt);
                        warn!("{model} request attempt {attempt} failed ({message}); retrying in {delay:?}");
                        thread::sleep(delay);
                    }
                    last = message;
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}
