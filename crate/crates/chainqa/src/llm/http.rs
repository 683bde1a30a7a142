//! Chat-completion and embedding clients over HTTP.
//!
//! Chat wire schema (any compatible endpoint works):
//!
//! ```text
//! POST {endpoint}
//! Authorization: Bearer $AUTH_ENV
//! {"model": "...", "messages": [{"role": "user", "content": "..."}], "temperature": 0.8, "n": 5}
//!
//! 200 {"choices": [{"message": {"content": "..."}}, ...]}
//! ```
//!
//! Embedding wire schema:
//!
//! ```text
//! POST {endpoint}
//! {"model": "...", "input": "..."}
//!
//! 200 {"data": [{"embedding": [0.1, ...]}]}
//! ```

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chainqa_core::client::{ChatClient, ChatError, EmbedError, EmbeddingProvider};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
    pub timeout: Duration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// Sends one POST. Swappable so tests can script responses.
pub trait Transport: Send + Sync {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder().http_status_as_error(false).build();
        UreqTransport { agent: ureq::Agent::new_with_config(config) }
    }
}

impl Transport for UreqTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = self
            .agent
            .post(&request.url)
            .config()
            .timeout_global(Some(request.timeout))
            .build()
            .header("Content-Type", "application/json");
        for (k, v) in &request.headers {
            builder = builder.header(k.as_str(), v.as_str());
        }
        match builder.send(request.body.as_str()) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp.body_mut().read_to_string().map_err(|e| TransportError::Io(e.to_string()))?;
                Ok(HttpResponse { status, body })
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportError::Timeout),
            Err(e) => Err(TransportError::Io(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 4, initial_backoff_ms: 500, max_backoff_ms: 16_000 }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }

    fn retryable(status: u16) -> bool {
        status == 408 || status == 429 || status >= 500
    }
}

/// Counting semaphore bounding concurrent requests.
pub struct InFlightLimiter {
    max: usize,
    state: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightGuard<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter { max: max.max(1), state: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.state.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.state.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpModelConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub auth_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    60
}

fn default_in_flight() -> usize {
    4
}

fn auth_key(env: &str) -> Option<String> {
    std::env::var(env).ok().filter(|v| !v.is_empty())
}

/// Runs `request` with retries on timeouts, transport errors and retryable
/// statuses.
fn send_with_retry(
    transport: &dyn Transport,
    limiter: &InFlightLimiter,
    retry: &RetryPolicy,
    request: &HttpRequest,
) -> Result<HttpResponse, ChatError> {
    let mut attempt = 0;
    loop {
        let outcome = {
            let _slot = limiter.acquire();
            transport.post(request)
        };
        let failure = match outcome {
            Ok(resp) if resp.status == 200 => return Ok(resp),
            Ok(resp) if RetryPolicy::retryable(resp.status) => ChatError::Status { status: resp.status, body: resp.body },
            Ok(resp) => return Err(ChatError::Status { status: resp.status, body: resp.body }),
            Err(TransportError::Timeout) => ChatError::Timeout,
            Err(TransportError::Io(e)) => ChatError::Transport(e),
        };
        if attempt >= retry.max_retries {
            return Err(failure);
        }
        std::thread::sleep(retry.backoff(attempt));
        attempt += 1;
    }
}

pub struct HttpChatClient {
    config: HttpModelConfig,
    key: String,
    transport: Arc<dyn Transport>,
    limiter: InFlightLimiter,
}

impl HttpChatClient {
    /// Reads the API key from `config.auth_env`; fails if it is unset.
    pub fn new(config: HttpModelConfig, transport: Arc<dyn Transport>) -> Result<Self, ChatError> {
        let key = auth_key(&config.auth_env).ok_or_else(|| ChatError::MissingAuth(config.auth_env.clone()))?;
        Ok(Self::with_key(config, transport, key))
    }

    pub fn with_key(config: HttpModelConfig, transport: Arc<dyn Transport>, key: String) -> Self {
        let limiter = InFlightLimiter::new(config.max_in_flight);
        HttpChatClient { config, key, transport, limiter }
    }

    pub fn request(&self, prompt: &str, temperature: f64, n: usize) -> HttpRequest {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        });
        HttpRequest {
            url: self.config.endpoint.clone(),
            headers: vec![("Authorization".into(), format!("Bearer {}", self.key))],
            body: body.to_string(),
            timeout: Duration::from_secs(self.config.timeout_secs),
        }
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl ChatClient for HttpChatClient {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let resp = send_with_retry(self.transport.as_ref(), &self.limiter, &self.config.retry, &self.request(prompt, temperature, n))?;
        let reply: ChatReply = serde_json::from_str(&resp.body).map_err(|e| ChatError::Malformed(e.to_string()))?;
        if reply.choices.len() != n {
            return Err(ChatError::Malformed(format!("asked for {n} choices, got {}", reply.choices.len())));
        }
        Ok(reply.choices.into_iter().map(|c| c.message.content).collect())
    }
}

pub struct HttpEmbedder {
    config: HttpModelConfig,
    key: String,
    dim: usize,
    transport: Arc<dyn Transport>,
    limiter: InFlightLimiter,
}

impl HttpEmbedder {
    pub fn new(config: HttpModelConfig, dim: usize, transport: Arc<dyn Transport>) -> Result<Self, EmbedError> {
        let key = auth_key(&config.auth_env).ok_or_else(|| EmbedError::MissingAuth(config.auth_env.clone()))?;
        Ok(Self::with_key(config, dim, transport, key))
    }

    pub fn with_key(config: HttpModelConfig, dim: usize, transport: Arc<dyn Transport>, key: String) -> Self {
        let limiter = InFlightLimiter::new(config.max_in_flight);
        HttpEmbedder { config, key, dim, transport, limiter }
    }
}

#[derive(Deserialize)]
struct EmbedReply {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let request = HttpRequest {
            url: self.config.endpoint.clone(),
            headers: vec![("Authorization".into(), format!("Bearer {}", self.key))],
            body: json!({"model": self.config.model, "input": text}).to_string(),
            timeout: Duration::from_secs(self.config.timeout_secs),
        };
        let resp = send_with_retry(self.transport.as_ref(), &self.limiter, &self.config.retry, &request)
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let reply: EmbedReply = serde_json::from_str(&resp.body).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        let v = reply.data.into_iter().next().ok_or_else(|| EmbedError::Malformed("no data".into()))?.embedding;
        if v.len() != self.dim {
            return Err(EmbedError::Malformed(format!("expected dimension {}, got {}", self.dim, v.len())));
        }
        super::embed::normalize(v).ok_or_else(|| EmbedError::Malformed("zero vector".into()))
    }
}
