//! Text-to-text generation backends.
//!
//! Every backend takes a batch of input strings and returns exactly one output
//! per input, in input order. Two implementations ship here: [`HttpBackend`]
//! speaks the model-server protocol (`docs/protocol.md`), and
//! [`OracleBackend`] answers from a fixed lookup table.

mod http;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, RetryPolicy};
pub use oracle::{OracleBackend, OracleBook, OracleEntry};

/// Which of the two models a request targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qg,
    Qa,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Qg => "qg",
            ModelKind::Qa => "qa",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qg" => Ok(ModelKind::Qg),
            "qa" => Ok(ModelKind::Qa),
            other => Err(format!("unknown model {other:?}, expected qg or qa")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("{model} backend returned an empty output for input {index}")]
    EmptyOutput { model: ModelKind, index: usize },
    #[error("oracle has no {model} entry for input {input:?}")]
    OracleMiss { model: ModelKind, input: String },
    #[error("oracle book: {0}")]
    OracleBook(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_length: u32,
    pub num_beams: u32,
    pub length_penalty: f64,
}

/// Question generation: 4 beams, no length penalty, 64 tokens.
pub fn default_qg_params() -> GenerationParams {
    GenerationParams {
        max_length: 64,
        num_beams: 4,
        length_penalty: 0.0,
    }
}

/// Question answering: 4 beams, length penalty -2.5, 128 tokens.
pub fn default_qa_params() -> GenerationParams {
    GenerationParams {
        max_length: 128,
        num_beams: 4,
        length_penalty: -2.5,
    }
}

pub fn default_params(model: ModelKind) -> GenerationParams {
    match model {
        ModelKind::Qg => default_qg_params(),
        ModelKind::Qa => default_qa_params(),
    }
}

/// Optional per-field overrides, as found in pipeline configs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub max_length: Option<u32>,
    pub num_beams: Option<u32>,
    pub length_penalty: Option<f64>,
}

impl GenerationParams {
    pub fn with_overrides(mut self, overrides: &ParamOverrides) -> Self {
        if let Some(v) = overrides.max_length {
            self.max_length = v;
        }
        if let Some(v) = overrides.num_beams {
            self.num_beams = v;
        }
        if let Some(v) = overrides.length_penalty {
            self.length_penalty = v;
        }
        self
    }

    pub fn greedy(self) -> Self {
        Self {
            num_beams: 1,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub inputs: Vec<String>,
    pub max_length: u32,
    pub num_beams: u32,
    pub length_penalty: f64,
}

impl GenerationRequest {
    pub fn new(inputs: Vec<String>, params: GenerationParams) -> Result<Self, BackendError> {
        let request = Self {
            inputs,
            max_length: params.max_length,
            num_beams: params.num_beams,
            length_penalty: params.length_penalty,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.inputs.is_empty() {
            return Err(BackendError::InvalidRequest("inputs is empty".into()));
        }
        if self.num_beams < 1 {
            return Err(BackendError::InvalidRequest("num_beams must be at least 1".into()));
        }
        if self.max_length < 1 {
            return Err(BackendError::InvalidRequest("max_length must be at least 1".into()));
        }
        if !self.length_penalty.is_finite() {
            return Err(BackendError::InvalidRequest("length_penalty must be finite".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            max_length: self.max_length,
            num_beams: self.num_beams,
            length_penalty: self.length_penalty,
        }
    }
}

/// A text-to-text generator.
///
/// Implementations may be shared across threads. Concurrent calls must not mix
/// outputs between requests.
pub trait Backend: Send + Sync {
    /// Returns one output per input, in order.
    fn generate(&self, model: ModelKind, request: &GenerationRequest) -> Result<Vec<String>, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, model: ModelKind, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        (**self).generate(model, request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, model: ModelKind, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        (**self).generate(model, request)
    }
}

/// Splits `inputs` into requests of at most `batch_size` and concatenates the outputs.
pub fn generate_batched<B: Backend + ?Sized>(
    backend: &B,
    model: ModelKind,
    inputs: &[String],
    params: GenerationParams,
    batch_size: usize,
) -> Result<Vec<String>, BackendError> {
    let mut outputs = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size.max(1)) {
        let request = GenerationRequest::new(chunk.to_vec(), params)?;
        let batch = backend.generate(model, &request)?;
        if batch.len() != chunk.len() {
            return Err(BackendError::Protocol(format!(
                "{} outputs for {} inputs",
                batch.len(),
                chunk.len()
            )));
        }
        outputs.extend(batch);
    }
    Ok(outputs)
}
