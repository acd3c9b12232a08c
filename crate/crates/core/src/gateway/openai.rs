use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage, ChatRequest, Completion};
use crate::error::{Error, Result};

/// Client for any endpoint speaking the OpenAI chat-completions protocol.
pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
    url: String,
    model_id: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: WireUsage,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiBackend {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(
        base_url: &str,
        model_id: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model_id: model_id.into(),
            api_key,
        })
    }

    /// Reads the bearer token from the environment variable `api_key_env`.
    pub fn from_env(base_url: &str, model_id: impl Into<String>, api_key_env: &str, timeout: Duration) -> Result<Self> {
        let key = std::env::var(api_key_env)
            .map_err(|_| Error::Config(format!("environment variable {api_key_env} is not set")))?;
        Self::new(base_url, model_id, Some(key), timeout)
    }
}

impl ChatBackend for OpenAiBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let mut http = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        let bytes = response.bytes().map_err(|e| BackendError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let snippet: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
            return Err(BackendError::Fatal(format!("HTTP {status}: {snippet}")));
        }
        parse_chat_response(&bytes)
    }
}

/// Decodes a chat-completions response body.
pub fn parse_chat_response(body: &[u8]) -> Result<Completion, BackendError> {
    let wire: WireResponse = serde_json::from_slice(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let text = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol("choices[0].message.content is missing".into()))?;
    Ok(Completion {
        text,
        prompt_tokens: wire.usage.prompt_tokens,
        completion_tokens: wire.usage.completion_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_wire_response() {
        let body = br#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"No"}}],
            "usage":{"prompt_tokens":12,"completion_tokens":1,"total_tokens":13}}"#;
        let c = parse_chat_response(body).unwrap();
        assert_eq!(c.text, "No");
        assert_eq!((c.prompt_tokens, c.completion_tokens), (12, 1));
    }

    #[test]
    fn malformed_payloads_are_protocol_errors() {
        for body in [
            &b"not json"[..],
            br#"{"choices":[],"usage":{"prompt_tokens":1,"completion_tokens":1}}"#,
            br#"{"choices":[{"message":{"content":null}}],"usage":{"prompt_tokens":1,"completion_tokens":1}}"#,
            br#"{"choices":[{"message":{"content":"x"}}]}"#,
        ] {
            assert!(matches!(parse_chat_response(body), Err(BackendError::Protocol(_))));
        }
    }

    #[test]
    fn request_body_shape() {
        let messages = vec![ChatMessage::user("Q?")];
        let body = WireRequest {
            model: "m",
            messages: &messages,
            temperature: 0.0,
            max_tokens: None,
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":"Q?"}],"temperature":0.0}"#
        );
    }
}
