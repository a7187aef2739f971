//! Chat-completion boundary: provider trait, retries, rate limiting, and
//! post-processing of responses into SQL.

mod mock;
mod openai;
mod response;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub use mock::{MockModel, OracleTurn, TranscriptRecord, TranscriptWriter};
pub use openai::OpenAiCompatible;
pub use response::{
    extract_components, resolve_prediction, ExtractionEmpty, ModelResponse, ResolveError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    /// `None` disables rate limiting.
    pub requests_per_minute: Option<u32>,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 1000,
            requests_per_minute: None,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("request exceeds the model budget: {0}")]
    BudgetExceeded(String),
    #[error("provider refused: {0}")]
    Refusal(String),
    #[error("malformed request: {0}")]
    BadRequest(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

/// A chat-completion provider.
pub trait ChatModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &CompletionConfig,
    ) -> Result<Completion, LlmError>;
}

/// Token bucket refilled continuously at `per_minute` requests per minute.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        let per_minute = per_minute.max(1);
        RateLimiter {
            per_minute,
            state: Mutex::new((per_minute as f64, Instant::now())),
        }
    }

    fn rate(&self) -> f64 {
        self.per_minute as f64 / 60.0
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self) -> Duration {
        let mut guard = self.state.lock().expect("rate limiter poisoned");
        let (tokens, last) = &mut *guard;
        let now = Instant::now();
        *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate())
            .min(self.per_minute as f64);
        *last = now;
        *tokens -= 1.0;
        if *tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-*tokens / self.rate())
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// A provider wrapped with rate limiting and retries on transport failures.
pub struct Client {
    model: Box<dyn ChatModel>,
    config: CompletionConfig,
    limiter: Option<RateLimiter>,
}

impl Client {
    pub fn new(model: Box<dyn ChatModel>, config: CompletionConfig) -> Self {
        let limiter = config.requests_per_minute.map(RateLimiter::new);
        Client {
            model,
            config,
            limiter,
        }
    }

    pub fn model_name(&self) -> &str {
        self.model.name()
    }

    pub fn config(&self) -> &CompletionConfig {
        &self.config
    }

    /// Sends `bundle`, retrying transport failures with exponential backoff.
    /// Other errors are returned at once.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<ModelResponse, LlmError> {
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.model.complete(bundle, &self.config) {
                Ok(c) => {
                    return Ok(ModelResponse {
                        raw: c.text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        usage: c.usage,
                        ..ModelResponse::default()
                    })
                }
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(attempt, delay_ms = delay, error = %e, "retrying completion");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: LlmError,
    }

    impl ChatModel for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn complete(&self, _: &PromptBundle, _: &CompletionConfig) -> Result<Completion, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(Completion {
                    text: "SELECT 1".into(),
                    usage: None,
                })
            }
        }
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            messages: vec![],
            test_start: 0,
            exemplars_used: 0,
            exemplars_dropped: 0,
            test_db: "d".into(),
            test_questions: vec![],
        }
    }

    fn cfg(retries: u32) -> CompletionConfig {
        CompletionConfig {
            max_retries: retries,
            backoff_ms: 1,
            ..CompletionConfig::default()
        }
    }

    #[test]
    fn retries_transport_errors_only() {
        let c = Client::new(
            Box::new(Flaky {
                failures: 2,
                calls: AtomicU32::new(0),
                error: LlmError::Transport("reset".into()),
            }),
            cfg(3),
        );
        assert_eq!(c.complete(&bundle()).unwrap().raw, "SELECT 1");

        let c = Client::new(
            Box::new(Flaky {
                failures: 5,
                calls: AtomicU32::new(0),
                error: LlmError::Transport("reset".into()),
            }),
            cfg(2),
        );
        assert!(matches!(c.complete(&bundle()), Err(LlmError::Transport(_))));

        let flaky = Flaky {
            failures: 1,
            calls: AtomicU32::new(0),
            error: LlmError::BadRequest("bad".into()),
        };
        let c = Client::new(Box::new(flaky), cfg(3));
        assert!(matches!(
            c.complete(&bundle()),
            Err(LlmError::BadRequest(_))
        ));
    }

    #[test]
    fn bucket_spaces_requests_once_empty() {
        let l = RateLimiter::new(60);
        for _ in 0..60 {
            assert!(l.reserve() < Duration::from_millis(50));
        }
        let wait = l.reserve();
        assert!(
            wait > Duration::from_millis(500) && wait <= Duration::from_millis(1000),
            "{wait:?}"
        );
    }
}
