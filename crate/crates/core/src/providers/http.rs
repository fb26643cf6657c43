//! Live HTTP providers speaking the common chat-completions / embeddings
//! wire shape. Request building and response parsing are pure functions so
//! the protocol logic is fully unit-testable without a network.

use serde_json::{json, Value};

use crate::providers::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, FinishReason, ProviderError,
    ReasoningEffort, Role, Usage,
};
use crate::similarity::EmbeddingVector;

const DEFAULT_TIMEOUT: std::time::Duration = std::time::Duration::from_secs(180);
const EMBED_BATCH: usize = 128;

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// JSON body for a chat-completions call. Reasoning effort is sent only
/// when it deviates from the provider default; sampling only when overridden.
pub fn build_chat_body(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| json!({"role": role_str(m.role), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": request.model_id,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
    });
    match request.reasoning_effort {
        ReasoningEffort::None => body["reasoning_effort"] = json!("none"),
        ReasoningEffort::Low => body["reasoning_effort"] = json!("low"),
        ReasoningEffort::Standard => {}
    }
    if let Some(sampling) = &request.sampling {
        if let Some(t) = sampling.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(p) = sampling.top_p {
            body["top_p"] = json!(p);
        }
    }
    body
}

/// Extract text, finish reason, and usage from a chat-completions payload.
pub fn parse_chat_response(value: &Value) -> Result<ChatResponse, ProviderError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProviderError::Protocol("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some("content_filter") => FinishReason::Filtered,
        _ => FinishReason::Error,
    };
    if text.is_empty() && finish_reason == FinishReason::Stop {
        return Err(ProviderError::Protocol(
            "empty completion with finish_reason=stop".into(),
        ));
    }
    let usage = Usage {
        input_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        output_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64),
    };
    Ok(ChatResponse {
        text,
        finish_reason,
        usage,
    })
}

/// JSON body for an embeddings call.
pub fn build_embed_body(model: &str, texts: &[String]) -> Value {
    json!({"model": model, "input": texts})
}

/// Extract vectors from an embeddings payload, restored to input order via
/// the per-item index field.
pub fn parse_embed_response(value: &Value, expected: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
    let data = value
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Protocol("embedding response has no data array".into()))?;
    if data.len() != expected {
        return Err(ProviderError::Protocol(format!(
            "embedding response has {} items, expected {expected}",
            data.len()
        )));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for item in data {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .ok_or_else(|| ProviderError::Protocol("embedding item missing index".into()))?
            as usize;
        let values: Vec<f64> = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Protocol("embedding item missing vector".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| ProviderError::Protocol("non-numeric embedding value".into()))
            })
            .collect::<Result<_, _>>()?;
        let slot = out
            .get_mut(index)
            .ok_or_else(|| ProviderError::Protocol(format!("embedding index {index} out of range")))?;
        if slot.is_some() {
            return Err(ProviderError::Protocol(format!(
                "embedding index {index} duplicated"
            )));
        }
        *slot = Some(values);
    }
    Ok(out.into_iter().map(|v| v.expect("all indices seen")).collect())
}

/// Whether an HTTP status is worth retrying.
pub fn transient_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

fn classify_reqwest_error(e: &reqwest::Error) -> ProviderError {
    if e.is_timeout() || e.is_connect() {
        ProviderError::Transient(e.to_string())
    } else {
        ProviderError::Permanent(e.to_string())
    }
}

fn api_key(env_var: &str) -> Result<String, ProviderError> {
    std::env::var(env_var).map_err(|_| ProviderError::MissingCredentials(env_var.to_string()))
}

fn handle_status(status: reqwest::StatusCode, body: String) -> ProviderError {
    let summary: String = body.chars().take(300).collect();
    if transient_status(status.as_u16()) {
        ProviderError::Transient(format!("status {status}: {summary}"))
    } else {
        ProviderError::Permanent(format!("status {status}: {summary}"))
    }
}

/// Chat-completions client for one endpoint. The API key is read from the
/// configured environment variable at call time, never stored.
pub struct HttpChatProvider {
    name: String,
    endpoint: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        api_key_env: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(DEFAULT_TIMEOUT)
            .build()
            .map_err(|e| ProviderError::Permanent(format!("client construction: {e}")))?;
        Ok(HttpChatProvider {
            name: name.into(),
            endpoint: endpoint.into(),
            api_key_env: api_key_env.into(),
            client,
        })
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let key = api_key(&self.api_key_env)?;
        let url = format!(
            "{}/chat/completions",
            self.endpoint.trim_end_matches('/')
        );
        let response = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(&build_chat_body(request))
            .send()
            .map_err(|e| classify_reqwest_error(&e))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| classify_reqwest_error(&e))?;
        if !status.is_success() {
            return Err(handle_status(status, body));
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| ProviderError::Protocol(format!("response body: {e}")))?;
        parse_chat_response(&value)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Embeddings client for one endpoint/model pair; batches internally.
pub struct HttpEmbeddingProvider {
    name: String,
    endpoint: String,
    api_key_env: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbeddingProvider {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        api_key_env: impl Into<String>,
        model: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(DEFAULT_TIMEOUT)
            .build()
            .map_err(|e| ProviderError::Permanent(format!("client construction: {e}")))?;
        Ok(HttpEmbeddingProvider {
            name: name.into(),
            endpoint: endpoint.into(),
            api_key_env: api_key_env.into(),
            model: model.into(),
            client,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let key = api_key(&self.api_key_env)?;
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let response = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(&build_embed_body(&self.model, texts))
            .send()
            .map_err(|e| classify_reqwest_error(&e))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| classify_reqwest_error(&e))?;
        if !status.is_success() {
            return Err(handle_status(status, body));
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| ProviderError::Protocol(format!("response body: {e}")))?;
        parse_embed_response(&value, texts.len())
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "embed called with no texts".into(),
            ));
        }
        let mut vectors = Vec::with_capacity(texts.len());
        for batch in texts.chunks(EMBED_BATCH) {
            for raw in self.embed_batch(batch)? {
                vectors.push(
                    EmbeddingVector::new(raw)
                        .map_err(|e| ProviderError::Protocol(format!("embedding: {e}")))?,
                );
            }
        }
        Ok(vectors)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ChatMessage, SamplingParams};

    fn request() -> ChatRequest {
        ChatRequest {
            model_id: "model-x".into(),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user("hi")],
            max_output_tokens: 2048,
            reasoning_effort: ReasoningEffort::None,
            sampling: None,
        }
    }

    #[test]
    fn chat_body_includes_messages_and_caps() {
        let body = build_chat_body(&request());
        assert_eq!(body["model"], "model-x");
        assert_eq!(body["max_tokens"], 2048);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");
        assert_eq!(body["reasoning_effort"], "none");
        assert!(body.get("temperature").is_none());
    }

    #[test]
    fn chat_body_omits_effort_at_standard_and_adds_sampling_when_overridden() {
        let mut r = request();
        r.reasoning_effort = ReasoningEffort::Standard;
        r.sampling = Some(SamplingParams {
            temperature: Some(0.2),
            top_p: Some(0.9),
        });
        let body = build_chat_body(&r);
        assert!(body.get("reasoning_effort").is_none());
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(body["top_p"], 0.9);
    }

    #[test]
    fn parse_chat_happy_path() {
        let value = json!({
            "choices": [{"message": {"content": "hello"}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3}
        });
        let response = parse_chat_response(&value).unwrap();
        assert_eq!(response.text, "hello");
        assert_eq!(response.finish_reason, FinishReason::Stop);
        assert_eq!(response.usage.input_tokens, Some(12));
        assert_eq!(response.usage.output_tokens, Some(3));
    }

    #[test]
    fn parse_chat_finish_reasons() {
        for (wire, expected) in [
            ("length", FinishReason::Length),
            ("content_filter", FinishReason::Filtered),
            ("weird", FinishReason::Error),
        ] {
            let value = json!({
                "choices": [{"message": {"content": "x"}, "finish_reason": wire}]
            });
            assert_eq!(parse_chat_response(&value).unwrap().finish_reason, expected);
        }
    }

    #[test]
    fn parse_chat_rejects_empty_stop_and_missing_choices() {
        let empty = json!({"choices": [{"message": {"content": ""}, "finish_reason": "stop"}]});
        assert!(parse_chat_response(&empty).is_err());
        let none = json!({"choices": []});
        assert!(parse_chat_response(&none).is_err());
        // Truncated-but-empty is allowed through; downstream flags it.
        let truncated =
            json!({"choices": [{"message": {"content": ""}, "finish_reason": "length"}]});
        assert!(parse_chat_response(&truncated).unwrap().truncated());
    }

    #[test]
    fn embed_response_restores_index_order() {
        let value = json!({
            "data": [
                {"index": 1, "embedding": [0.5, 0.5]},
                {"index": 0, "embedding": [1.0, 0.0]},
            ]
        });
        let vectors = parse_embed_response(&value, 2).unwrap();
        assert_eq!(vectors[0], vec![1.0, 0.0]);
        assert_eq!(vectors[1], vec![0.5, 0.5]);
    }

    #[test]
    fn embed_response_validates_shape() {
        let missing = json!({"data": [{"index": 0}]});
        assert!(parse_embed_response(&missing, 1).is_err());
        let wrong_count = json!({"data": []});
        assert!(parse_embed_response(&wrong_count, 1).is_err());
        let duplicate = json!({
            "data": [
                {"index": 0, "embedding": [1.0]},
                {"index": 0, "embedding": [2.0]},
            ]
        });
        assert!(parse_embed_response(&duplicate, 2).is_err());
    }

    #[test]
    fn transient_statuses() {
        for status in [408u16, 429, 500, 502, 503] {
            assert!(transient_status(status), "{status} should be transient");
        }
        for status in [200u16, 400, 401, 403, 404] {
            assert!(!transient_status(status), "{status} should not be transient");
        }
    }

    #[test]
    fn missing_credentials_surface_by_var_name() {
        let provider = HttpChatProvider::new(
            "live",
            "http://localhost:1",
            "LAUNDERKIT_TEST_UNSET_KEY",
        )
        .unwrap();
        std::env::remove_var("LAUNDERKIT_TEST_UNSET_KEY");
        match provider.complete(&request()) {
            Err(ProviderError::MissingCredentials(var)) => {
                assert_eq!(var, "LAUNDERKIT_TEST_UNSET_KEY")
            }
            other => panic!("expected MissingCredentials, got {other:?}"),
        }
    }
}
