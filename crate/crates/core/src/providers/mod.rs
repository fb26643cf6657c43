//! Provider layer: uniform chat-completion and embedding clients with
//! retries, disk caching, rate limiting, and scripted mocks.
//!
//! Everything downstream (laundering, judging, dedup) talks to the two
//! traits here; whether calls hit a live endpoint, a cache file, or a
//! scripted mock is invisible to callers.

mod cache;
mod http;
mod local_embed;
mod mock;

pub use cache::{CachedClient, CachedEmbeddingProvider, ResponseCache};
pub use http::{
    build_chat_body, build_embed_body, parse_chat_response, parse_embed_response,
    HttpChatProvider, HttpEmbeddingProvider,
};
pub use local_embed::LocalHashEmbedding;
pub use mock::{MockChatProvider, MockEmbeddingProvider, ScriptEntry};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::similarity::EmbeddingVector;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, rate limits, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Not worth retrying: auth failures, bad requests, 4xx.
    #[error("provider failure: {0}")]
    Permanent(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("no scripted response matches request (last user message {0:?})")]
    NoScriptedResponse(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("malformed provider payload: {0}")]
    Protocol(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("offline mode forbids live provider {0:?}")]
    Offline(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// How much chain-of-thought the provider should spend before answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    None,
    Low,
    #[default]
    Standard,
}

/// Explicit sampling override; absent means provider defaults, which keeps
/// the override out of the cache key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub reasoning_effort: ReasoningEffort,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingParams>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_output_tokens < 1 {
            return Err(ProviderError::InvalidRequest(
                "max_output_tokens must be at least 1".into(),
            ));
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(ProviderError::InvalidRequest(
                "request needs at least one user message".into(),
            ));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Filtered,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
        }
    }

    pub fn truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

/// A chat-completion backend. Implementations must be safe to share across
/// worker threads.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;

    /// Short name for logs and error messages.
    fn name(&self) -> &str;
}

/// An embedding backend. One vector per input text, order preserved; the
/// provider owns tokenization and the 512-token input truncation.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;

    fn name(&self) -> &str;
}

/// Content-address a request: everything that can change the response goes
/// into the key; sampling is included only when explicitly overridden.
pub fn cache_key(request: &ChatRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model_id: &'a str,
        messages: &'a [ChatMessage],
        max_output_tokens: u32,
        reasoning_effort: ReasoningEffort,
        #[serde(skip_serializing_if = "Option::is_none")]
        sampling: Option<&'a SamplingParams>,
    }
    let material = KeyMaterial {
        model_id: &request.model_id,
        messages: &request.messages,
        max_output_tokens: request.max_output_tokens,
        reasoning_effort: request.reasoning_effort,
        sampling: request.sampling.as_ref(),
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Content-address one embedding input.
pub fn embed_cache_key(provider_name: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"embed\x00");
    hasher.update(provider_name.as_bytes());
    hasher.update(b"\x00");
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

/// Exponential backoff schedule for transient failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: std::time::Duration,
    pub max_delay: std::time::Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: std::time::Duration::from_millis(500),
            max_delay: std::time::Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: std::time::Duration::ZERO,
            max_delay: std::time::Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (1-based): base · 2^(retry−1), capped.
    pub fn delay_for(&self, retry: u32) -> std::time::Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.base_delay
            .saturating_mul(factor)
            .min(self.max_delay)
    }
}

/// Token-bucket rate limiter; one token per request, blocking acquire.
pub struct RateLimiter {
    state: std::sync::Mutex<BucketState>,
    capacity: f64,
    refill_per_sec: f64,
}

struct BucketState {
    tokens: f64,
    last_refill: std::time::Instant,
}

impl RateLimiter {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        assert!(capacity >= 1 && refill_per_sec > 0.0);
        RateLimiter {
            state: std::sync::Mutex::new(BucketState {
                tokens: capacity as f64,
                last_refill: std::time::Instant::now(),
            }),
            capacity: capacity as f64,
            refill_per_sec,
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter poisoned");
                let now = std::time::Instant::now();
                let elapsed = now.duration_since(state.last_refill).as_secs_f64();
                state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
                state.last_refill = now;
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                std::time::Duration::from_secs_f64((1.0 - state.tokens) / self.refill_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(user: &str) -> ChatRequest {
        ChatRequest {
            model_id: "m1".into(),
            messages: vec![ChatMessage::user(user)],
            max_output_tokens: 64,
            reasoning_effort: ReasoningEffort::Standard,
            sampling: None,
        }
    }

    #[test]
    fn validate_requires_user_message_and_cap() {
        assert!(request("hi").validate().is_ok());
        let mut r = request("hi");
        r.max_output_tokens = 0;
        assert!(r.validate().is_err());
        let r = ChatRequest {
            model_id: "m".into(),
            messages: vec![ChatMessage::system("sys")],
            max_output_tokens: 10,
            reasoning_effort: ReasoningEffort::None,
            sampling: None,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn cache_key_sensitive_to_content() {
        let base = cache_key(&request("hello"));
        assert_eq!(base, cache_key(&request("hello")), "key is deterministic");
        assert_ne!(base, cache_key(&request("hello!")));

        let mut r = request("hello");
        r.model_id = "m2".into();
        assert_ne!(base, cache_key(&r));

        let mut r = request("hello");
        r.max_output_tokens = 65;
        assert_ne!(base, cache_key(&r));

        let mut r = request("hello");
        r.reasoning_effort = ReasoningEffort::None;
        assert_ne!(base, cache_key(&r));
    }

    #[test]
    fn cache_key_ignores_sampling_until_overridden() {
        let default_key = cache_key(&request("hello"));
        let mut r = request("hello");
        r.sampling = Some(SamplingParams {
            temperature: Some(0.7),
            top_p: None,
        });
        assert_ne!(default_key, cache_key(&r), "override must change the key");
    }

    #[test]
    fn last_user_message_picks_latest() {
        let r = ChatRequest {
            model_id: "m".into(),
            messages: vec![
                ChatMessage::system("s"),
                ChatMessage::user("first"),
                ChatMessage::assistant("a"),
                ChatMessage::user("second"),
            ],
            max_output_tokens: 10,
            reasoning_effort: ReasoningEffort::Standard,
            sampling: None,
        };
        assert_eq!(r.last_user_message(), Some("second"));
    }

    #[test]
    fn retry_delays_double_and_cap() {
        let policy = RetryPolicy {
            max_retries: 5,
            base_delay: std::time::Duration::from_millis(100),
            max_delay: std::time::Duration::from_millis(350),
        };
        assert_eq!(policy.delay_for(1), std::time::Duration::from_millis(100));
        assert_eq!(policy.delay_for(2), std::time::Duration::from_millis(200));
        assert_eq!(policy.delay_for(3), std::time::Duration::from_millis(350));
        assert_eq!(policy.delay_for(4), std::time::Duration::from_millis(350));
    }

    #[test]
    fn rate_limiter_allows_burst_up_to_capacity() {
        let limiter = RateLimiter::new(3, 1000.0);
        let start = std::time::Instant::now();
        for _ in 0..3 {
            limiter.acquire();
        }
        assert!(start.elapsed() < std::time::Duration::from_millis(50));
    }

    #[test]
    fn embed_cache_key_separates_providers_and_texts() {
        let a = embed_cache_key("p1", "text");
        assert_eq!(a, embed_cache_key("p1", "text"));
        assert_ne!(a, embed_cache_key("p2", "text"));
        assert_ne!(a, embed_cache_key("p1", "other"));
    }
}
