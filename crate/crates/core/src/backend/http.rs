use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{CallLog, CallLogEntry, Completion, CompletionBackend, CompletionRequest, Usage};
use crate::error::BackendError;

pub const ENV_API_URL: &str = "TT_API_URL";
pub const ENV_API_KEY: &str = "TT_API_KEY";
pub const ENV_MODEL: &str = "TT_MODEL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base, 2x base, 4x base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1 << retry.saturating_sub(1).min(16))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Full chat-completions endpoint URL.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model_id: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Prompt-size warning threshold in estimated tokens.
    pub context_budget: Option<usize>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            model_id: model_id.into(),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            context_budget: Some(128_000),
        }
    }

    /// Reads endpoint, key and model from `TT_API_URL`, `TT_API_KEY`, `TT_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var(ENV_API_URL).map_err(|_| BackendError::Config(format!("{ENV_API_URL} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let model = std::env::var(ENV_MODEL).unwrap_or_default();
        Ok(Self::new(endpoint, key, model))
    }
}

/// Status and body of one HTTP exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Client for the chat-completion JSON protocol.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
    log: Arc<CallLog>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(Completion),
    Retry(BackendError),
    Fail(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig, log: Arc<CallLog>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { in_flight: Semaphore::new(config.max_in_flight), config, client, log })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    pub fn log(&self) -> &Arc<CallLog> {
        &self.log
    }

    fn model_for(&self, request: &CompletionRequest<'_>) -> String {
        if request.model_id.is_empty() { self.config.model_id.clone() } else { request.model_id.clone() }
    }

    /// The JSON body sent for a request: a system message with the context
    /// block and a user message with the rest of the prompt.
    pub fn payload(&self, request: &CompletionRequest<'_>) -> serde_json::Value {
        json!({
            "model": self.model_for(request),
            "messages": [
                {"role": "system", "content": request.bundle.system_text()},
                {"role": "user", "content": request.bundle.user_text()},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    /// One network exchange, no retries.
    pub fn http_chat_send(&self, request: &CompletionRequest<'_>) -> Result<RawResponse, BackendError> {
        let key = self
            .config
            .api_key
            .as_deref()
            .ok_or_else(|| BackendError::Authentication(format!("{ENV_API_KEY} is not set")))?;
        let _permit = self.in_flight.acquire();
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(key)
            .json(&self.payload(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout { attempts: 1 }
                } else {
                    BackendError::Network { attempts: 1, msg: e.to_string() }
                }
            })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| BackendError::Network { attempts: 1, msg: e.to_string() })?;
        Ok(RawResponse { status, body })
    }

    fn attempt(&self, request: &CompletionRequest<'_>, statuses: &mut Vec<u16>, started: Instant, attempts: u32) -> Attempt {
        let raw = match self.http_chat_send(request) {
            Ok(raw) => raw,
            Err(e @ BackendError::Authentication(_)) => return Attempt::Fail(e),
            Err(BackendError::Timeout { .. }) => {
                statuses.push(0);
                return Attempt::Retry(BackendError::Timeout { attempts });
            }
            Err(BackendError::Network { msg, .. }) => {
                statuses.push(0);
                return Attempt::Retry(BackendError::Network { attempts, msg });
            }
            Err(e) => return Attempt::Fail(e),
        };
        statuses.push(raw.status);
        match raw.status {
            200..=299 => match parse_completion(&raw.body) {
                Ok((text, usage)) => Attempt::Done(Completion {
                    text,
                    backend_id: self.id(),
                    latency: started.elapsed(),
                    usage,
                    attempts,
                }),
                Err(e) => Attempt::Fail(e),
            },
            401 | 403 => Attempt::Fail(BackendError::Authentication(truncate(&raw.body))),
            400 | 413 if mentions_context_limit(&raw.body) => Attempt::Fail(BackendError::ContextLength(truncate(&raw.body))),
            408 | 429 | 500..=599 => Attempt::Retry(BackendError::Api { status: raw.status, body: truncate(&raw.body) }),
            status => Attempt::Fail(BackendError::Api { status, body: truncate(&raw.body) }),
        }
    }
}

fn truncate(body: &str) -> String {
    body.chars().take(500).collect()
}

fn mentions_context_limit(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context") && (b.contains("length") || b.contains("window") || b.contains("limit") || b.contains("too long"))
}

fn parse_completion(body: &str) -> Result<(String, Option<Usage>), BackendError> {
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| BackendError::InvalidResponse("no completion text".into()))?;
    let usage = parsed.usage.map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens });
    Ok((text, usage))
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.model_id)
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        request.validate()?;
        request.check_budget(self.config.context_budget);
        let started = Instant::now();
        let mut statuses = Vec::new();
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.attempt(request, &mut statuses, started, attempts) {
                Attempt::Done(c) => break Ok(c),
                Attempt::Fail(e) => break Err(e),
                Attempt::Retry(e) if attempts >= self.config.retry.attempts => break Err(e),
                Attempt::Retry(e) => {
                    ::log::debug!("attempt {attempts} failed ({e}), backing off");
                    thread::sleep(self.config.retry.delay(attempts));
                }
            }
        };
        self.log.record(CallLogEntry {
            prompt_hash: request.bundle.hash(),
            backend: self.id(),
            model: self.model_for(request),
            temperature: request.temperature,
            attempts,
            statuses,
            ok: outcome.is_ok(),
            error: outcome.as_ref().err().map(ToString::to_string),
            response_chars: outcome.as_ref().ok().map(|c| c.text.chars().count()),
            latency_ms: started.elapsed().as_millis() as u64,
        });
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(1), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        assert_eq!(p.delay(3), Duration::from_secs(4));
    }

    #[test]
    fn parses_chat_body() {
        let (text, usage) =
            parse_completion(r#"{"choices":[{"message":{"role":"assistant","content":"Label: a"}}],"usage":{"prompt_tokens":3,"completion_tokens":2}}"#)
                .unwrap();
        assert_eq!(text, "Label: a");
        assert_eq!(usage, Some(Usage { prompt_tokens: 3, completion_tokens: 2 }));
        assert!(parse_completion(r#"{"choices":[]}"#).is_err());
        assert!(parse_completion(r#"{"choices":[{"message":{"content":""}}]}"#).is_err());
    }

    #[test]
    fn context_limit_detection() {
        assert!(mentions_context_limit("This model's maximum context length is 8192 tokens"));
        assert!(!mentions_context_limit("bad request"));
    }
}
