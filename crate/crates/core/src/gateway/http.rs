use std::time::Duration;

use reqwest::header::RETRY_AFTER;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{ModelEndpoint, PromptRequest, QueryError, Responder};

const MAX_BACKOFF: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

/// Client for OpenAI-compatible `POST {base_url}/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpResponder {
    endpoint: ModelEndpoint,
    client: reqwest::Client,
    url: String,
    token: Option<String>,
}

impl HttpResponder {
    /// Resolves the auth token from the environment up front, so a missing
    /// token fails before any request is sent.
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, QueryError> {
        endpoint.validate()?;
        let token = match &endpoint.auth_token_env_name {
            Some(var) => Some(
                std::env::var(var).map_err(|_| QueryError::MissingToken(var.clone()))?,
            ),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| QueryError::Config(e.to_string()))?;
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        Ok(Self {
            endpoint,
            client,
            url,
            token,
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    async fn send_once(&self, prompt: &str) -> Result<String, QueryError> {
        let body = ChatRequest {
            model: &self.endpoint.model_name,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.endpoint.temperature,
            max_tokens: self.endpoint.max_tokens,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(classify_transport)?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            let retry_after = resp
                .headers()
                .get(RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|s| s.is_finite() && *s >= 0.0)
                .map(Duration::from_secs_f64);
            return Err(QueryError::RateLimited { retry_after });
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            let code = status.as_u16();
            return Err(if code == 401 || code == 403 {
                QueryError::Auth { status: code, body }
            } else {
                QueryError::Http { status: code, body }
            });
        }
        let text = resp.text().await.map_err(classify_transport)?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| QueryError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| QueryError::BadResponse("no choices in completion".into()))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.endpoint
            .retry_base_delay
            .saturating_mul(1u32 << attempt.min(16))
            .min(MAX_BACKOFF)
    }

    /// Sends `prompt`, retrying transient failures with exponential backoff.
    pub async fn query(&self, prompt: &str) -> Result<String, QueryError> {
        let mut attempt = 0u32;
        loop {
            match self.send_once(prompt).await {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.endpoint.max_retries => {
                    let delay = match &e {
                        QueryError::RateLimited {
                            retry_after: Some(d),
                        } => (*d).min(MAX_BACKOFF),
                        _ => self.backoff(attempt),
                    };
                    warn!(attempt, ?delay, error = %e, "retrying request");
                    tokio::time::sleep(delay).await;
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(QueryError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn classify_transport(e: reqwest::Error) -> QueryError {
    if e.is_timeout() {
        QueryError::Timeout
    } else {
        QueryError::Network(e.to_string())
    }
}

impl Responder for HttpResponder {
    fn model_name(&self) -> &str {
        &self.endpoint.model_name
    }

    async fn respond(&self, request: &PromptRequest<'_>) -> Result<String, QueryError> {
        self.query(request.prompt).await
    }
}
