//! Completion backends behind one trait: an offline neighbor-oracle mock and
//! a remote chat-completion client.

mod http;
mod log;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use self::http::{HttpBackend, HttpConfig, RawResponse, RetryPolicy, ENV_API_KEY, ENV_API_URL, ENV_MODEL};
pub use self::log::{CallLog, CallLogEntry};
pub use self::mock::{mock_label, MockBackend};
use crate::error::BackendError;
use crate::prompt::PromptBundle;
use crate::table::estimate_tokens;

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(bundle: &'a PromptBundle, temperature: f64) -> Self {
        Self { bundle, temperature, max_tokens: DEFAULT_MAX_TOKENS, model_id: String::new() }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Warns when the prompt estimate exceeds `budget`; the backend decides
    /// whether the request is actually rejected.
    pub fn check_budget(&self, budget: Option<usize>) {
        if let Some(budget) = budget {
            let estimate = estimate_tokens(&self.bundle.rendered);
            if estimate > budget {
                ::log::warn!("prompt {} estimated at {estimate} tokens, over the {budget}-token budget", self.bundle.hash());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
    pub usage: Option<Usage>,
    /// Network attempts spent, 1 when the first try succeeded.
    pub attempts: u32,
}

/// A text generator for rendered prompts. Implementations must be safe to
/// call from many worker threads.
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
}
