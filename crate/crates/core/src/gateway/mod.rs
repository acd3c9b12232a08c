//! Chat-completion gateway.
//!
//! A [`Gateway`] wraps any [`ChatBackend`] (the OpenAI-compatible HTTP
//! client or a [`ScriptedBackend`]) with request validation, retry with
//! exponential backoff, an in-flight limit and token metering.

mod meter;
mod openai;
mod scripted;
pub mod scripts;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use meter::{CallLog, MeterSnapshot, Phase, TokenMeter, Usage};
pub use openai::{parse_chat_response, OpenAiBackend};
pub use scripted::{messages_hash, scripted_backend, Matcher, Reply, Rule, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub model_id: String,
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            model_id: model_id.into(),
            max_output_tokens: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Precondition("chat request has no messages".into()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.role != Role::System && m.content.trim().is_empty() {
                return Err(Error::Precondition(format!(
                    "message {i} ({:?}) has empty content",
                    m.role
                )));
            }
        }
        Ok(())
    }
}

/// What a backend returns for one successful call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Completion {
    pub fn usage(&self) -> Usage {
        Usage::new(self.prompt_tokens, self.completion_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
    /// The backend answered but the payload was not understood.
    #[error("malformed payload: {0}")]
    Protocol(String),
    #[error("{0}")]
    Scripting(String),
}

pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            timeout_secs: 60,
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_backoff_ms: 0,
            ..Self::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1 << attempt.min(16)))
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(limit: usize) -> Self {
        Self {
            available: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("limiter poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// Shareable handle for issuing metered chat calls.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<GatewayInner>,
}

struct GatewayInner {
    backend: Arc<dyn ChatBackend>,
    meter: Arc<TokenMeter>,
    retry: RetryPolicy,
    limiter: Limiter,
    max_output_tokens: Option<u32>,
    next_id: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self::builder(backend).build()
    }

    pub fn builder(backend: Arc<dyn ChatBackend>) -> GatewayBuilder {
        GatewayBuilder {
            backend,
            meter: None,
            retry: RetryPolicy::default(),
            in_flight: 4,
            max_output_tokens: None,
        }
    }

    pub fn model_id(&self) -> &str {
        self.inner.backend.model_id()
    }

    pub fn meter(&self) -> &Arc<TokenMeter> {
        &self.inner.meter
    }

    /// Sends `messages` at temperature 0 and meters the call under `phase`.
    pub fn complete(&self, messages: Vec<ChatMessage>, phase: Phase) -> Result<Completion> {
        let mut request = ChatRequest::new(self.model_id(), messages);
        request.max_output_tokens = self.inner.max_output_tokens;
        self.complete_request(&request, phase)
    }

    pub fn complete_request(&self, request: &ChatRequest, phase: Phase) -> Result<Completion> {
        request.validate()?;
        let request_id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let _permit = self.inner.limiter.acquire();
        let retry = &self.inner.retry;
        let mut attempt = 0;
        loop {
            match self.inner.backend.send(request) {
                Ok(completion) => {
                    self.inner.meter.record(
                        phase,
                        request_id,
                        completion.prompt_tokens,
                        completion.completion_tokens,
                    );
                    return Ok(completion);
                }
                Err(BackendError::Transient(msg)) if attempt + 1 < retry.max_attempts => {
                    tracing::warn!(request_id, attempt, %msg, "transient failure, retrying");
                    std::thread::sleep(retry.backoff(attempt));
                    attempt += 1;
                }
                Err(BackendError::Transient(msg)) | Err(BackendError::Fatal(msg)) => {
                    return Err(Error::Call {
                        request_id,
                        message: format!("{msg} (after {} attempt(s))", attempt + 1),
                    })
                }
                Err(BackendError::Protocol(message)) => return Err(Error::Protocol { request_id, message }),
                Err(BackendError::Scripting(msg)) => return Err(Error::Scripting(msg)),
            }
        }
    }
}

pub struct GatewayBuilder {
    backend: Arc<dyn ChatBackend>,
    meter: Option<Arc<TokenMeter>>,
    retry: RetryPolicy,
    in_flight: usize,
    max_output_tokens: Option<u32>,
}

impl GatewayBuilder {
    pub fn meter(mut self, meter: Arc<TokenMeter>) -> Self {
        self.meter = Some(meter);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn in_flight(mut self, limit: usize) -> Self {
        self.in_flight = limit;
        self
    }

    pub fn max_output_tokens(mut self, max: Option<u32>) -> Self {
        self.max_output_tokens = max;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            inner: Arc::new(GatewayInner {
                backend: self.backend,
                meter: self.meter.unwrap_or_default(),
                retry: self.retry,
                limiter: Limiter::new(self.in_flight),
                max_output_tokens: self.max_output_tokens,
                next_id: AtomicU64::new(0),
            }),
        }
    }
}

/// Whitespace token count, used by the scripted backend and for budgets.
pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    /// Fails transiently `failures` times, then echoes.
    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }

        fn send(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                return Err(BackendError::Transient("connection reset".into()));
            }
            Ok(Completion {
                text: request.messages[0].content.clone(),
                prompt_tokens: 3,
                completion_tokens: 1,
            })
        }
    }

    fn flaky(failures: u32) -> Arc<Flaky> {
        Arc::new(Flaky {
            failures,
            calls: AtomicU32::new(0),
        })
    }

    #[test]
    fn retries_transient_failures_without_metering_them() {
        let backend = flaky(2);
        let gw = Gateway::builder(backend.clone())
            .retry(RetryPolicy::no_backoff(3))
            .build();
        let out = gw.complete(vec![ChatMessage::user("hi")], Phase::Training).unwrap();
        assert_eq!(out.text, "hi");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let snap = gw.meter().snapshot();
        assert_eq!(snap.calls, 1);
        assert_eq!(snap.total, Usage::new(3, 1));
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let gw = Gateway::builder(flaky(5)).retry(RetryPolicy::no_backoff(3)).build();
        let err = gw.complete(vec![ChatMessage::user("hi")], Phase::Training).unwrap_err();
        assert!(matches!(err, Error::Call { request_id: 0, .. }), "{err}");
        assert_eq!(gw.meter().snapshot().calls, 0);
    }

    #[test]
    fn rejects_empty_requests() {
        let gw = Gateway::new(flaky(0));
        assert!(matches!(
            gw.complete(vec![], Phase::Training),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            gw.complete(vec![ChatMessage::user("  ")], Phase::Training),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            initial_backoff_ms: 100,
            ..Default::default()
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(400));
    }

    #[test]
    fn concurrent_calls_are_all_metered() {
        let gw = Gateway::builder(flaky(0)).in_flight(3).build();
        std::thread::scope(|s| {
            for i in 0..16 {
                let gw = gw.clone();
                s.spawn(move || {
                    let phase = if i % 2 == 0 {
                        Phase::Training
                    } else {
                        Phase::Utilization
                    };
                    gw.complete(vec![ChatMessage::user("x")], phase).unwrap();
                });
            }
        });
        let snap = gw.meter().snapshot();
        assert_eq!(snap.calls, 16);
        assert_eq!(snap.total, Usage::new(48, 16));
        assert_eq!(snap.training, Usage::new(24, 8));
        assert_eq!(snap.utilization, Usage::new(24, 8));
    }
}
