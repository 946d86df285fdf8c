//! Model access: an OpenAI-compatible HTTP client, a deterministic mock
//! oracle, a response cache, and the run driver that turns divergent sets into
//! an [`EvaluationMatrix`](crate::metrics::EvaluationMatrix).

mod cache;
mod http;
mod mock;
mod run;

use std::future::Future;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::ParsedAnswer;
use crate::seeding::sha256_hex;

pub use cache::{CacheError, ResponseCache};
pub use http::HttpResponder;
pub use mock::{FailureMode, MockOracle};
pub use run::{evaluate_run, Job, RunError, RunOptions, RunOutput};

/// Connection and sampling settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; `None` sends no auth header.
    pub auth_token_env_name: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First backoff delay; doubles on every retry.
    #[serde(with = "duration_ms")]
    pub retry_base_delay: Duration,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env_name: None,
            temperature: 0.0,
            max_tokens: 64,
            timeout: Duration::from_secs(60),
            max_retries: 5,
            max_in_flight: 8,
            retry_base_delay: Duration::from_millis(500),
        }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.max_in_flight < 1 {
            return Err(QueryError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(QueryError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// One model answer to one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub parent_id: String,
    pub variant_index: usize,
    pub prompt_hash: String,
    pub raw_text: String,
    pub parsed: ParsedAnswer,
    pub correct: bool,
    pub model_name: String,
    pub timestamp: String,
}

/// Stable digest of a rendered prompt for a given model.
pub fn prompt_hash(model_name: &str, prompt: &str) -> String {
    let mut buf = Vec::with_capacity(model_name.len() + prompt.len() + 1);
    buf.extend_from_slice(model_name.as_bytes());
    buf.push(0);
    buf.extend_from_slice(prompt.as_bytes());
    sha256_hex(&buf)
}

/// Everything a responder may look at. HTTP backends only use `prompt`; the
/// mock oracle needs the answer key to decide what to say.
#[derive(Debug, Clone, Copy)]
pub struct PromptRequest<'a> {
    pub prompt: &'a str,
    pub prompt_hash: &'a str,
    pub num_choices: usize,
    pub answer_index: usize,
    pub alphabet: &'a [char],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("auth token variable {0} is not set")]
    MissingToken(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited (HTTP 429)")]
    RateLimited { retry_after: Option<Duration> },
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<QueryError> },
}

impl QueryError {
    pub fn is_retryable(&self) -> bool {
        match self {
            QueryError::Network(_) | QueryError::Timeout | QueryError::RateLimited { .. } => true,
            QueryError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Something that answers rendered prompts.
pub trait Responder {
    /// Identity folded into every prompt hash, so different models never share cache entries.
    fn model_name(&self) -> &str;

    fn respond(&self, request: &PromptRequest<'_>) -> impl Future<Output = Result<String, QueryError>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_hash_depends_on_model_and_text() {
        let a = prompt_hash("m1", "hello");
        assert_eq!(a.len(), 64);
        assert_eq!(a, prompt_hash("m1", "hello"));
        assert_ne!(a, prompt_hash("m2", "hello"));
        assert_ne!(a, prompt_hash("m1", "hello!"));
        assert_ne!(prompt_hash("ab", "c"), prompt_hash("a", "bc"));
    }

    #[test]
    fn retry_classification() {
        assert!(QueryError::Http { status: 503, body: String::new() }.is_retryable());
        assert!(!QueryError::Http { status: 400, body: String::new() }.is_retryable());
        assert!(QueryError::Timeout.is_retryable());
        assert!(!QueryError::Auth { status: 401, body: String::new() }.is_retryable());
    }

    #[test]
    fn endpoint_validation() {
        let mut e = ModelEndpoint::new("http://x/v1", "m");
        assert!(e.validate().is_ok());
        e.max_in_flight = 0;
        assert!(e.validate().is_err());
        let mut e = ModelEndpoint::new("http://x/v1", "m");
        e.temperature = -0.1;
        assert!(e.validate().is_err());
        let json = serde_json::to_value(ModelEndpoint::new("http://x/v1", "m")).unwrap();
        assert_eq!(json["timeout"], 60_000);
        assert_eq!(json["temperature"], 0.0);
    }
}
