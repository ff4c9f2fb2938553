use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, Provider, ProviderFailure, ProviderReply};

pub const ENDPOINT_VAR: &str = "ADSYNTH_LLM_ENDPOINT";
pub const API_KEY_VAR: &str = "ADSYNTH_LLM_API_KEY";
pub const AUTH_HEADER_VAR: &str = "ADSYNTH_LLM_AUTH_HEADER";

/// Chat-completion provider speaking the OpenAI-compatible wire format
/// (`POST {endpoint}` with a `messages` array). Works against Azure-style
/// deployments by setting the auth header name to `api-key`.
pub struct ChatCompletionsProvider {
    endpoint: String,
    api_key: String,
    auth_header: String,
    agent: ureq::Agent,
}

impl ChatCompletionsProvider {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        auth_header: impl Into<String>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ChatCompletionsProvider {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            auth_header: auth_header.into(),
            agent,
        }
    }

    /// Reads endpoint and credentials from the environment.
    pub fn from_env(timeout: Duration) -> Result<Self, String> {
        let endpoint = env::var(ENDPOINT_VAR).map_err(|_| format!("{ENDPOINT_VAR} is not set"))?;
        let api_key = env::var(API_KEY_VAR).map_err(|_| format!("{API_KEY_VAR} is not set"))?;
        let auth_header = env::var(AUTH_HEADER_VAR).unwrap_or_else(|_| "Authorization".to_string());
        Ok(Self::new(endpoint, api_key, auth_header, timeout))
    }

    fn auth_value(&self) -> String {
        if self.auth_header.eq_ignore_ascii_case("authorization") {
            format!("Bearer {}", self.api_key)
        } else {
            self.api_key.clone()
        }
    }
}

pub(crate) fn request_body(request: &CompletionRequest) -> Value {
    json!({
        "model": request.model_id,
        "messages": [{"role": "user", "content": request.prompt}],
        "max_tokens": request.max_output_tokens,
        "temperature": request.temperature,
    })
}

pub(crate) fn parse_reply(status: u16, body: &str) -> Result<ProviderReply, ProviderFailure> {
    if status == 429 || status >= 500 {
        return Err(ProviderFailure::Transient(format!("HTTP {status}: {}", truncate(body))));
    }
    if !(200..300).contains(&status) {
        return Err(ProviderFailure::Fatal(format!("HTTP {status}: {}", truncate(body))));
    }
    let value: Value =
        serde_json::from_str(body).map_err(|e| ProviderFailure::Fatal(format!("invalid response body: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProviderFailure::Fatal("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderFailure::Fatal("response choice has no message content".into()))?;
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    Ok(ProviderReply {
        text: text.to_string(),
        truncated,
    })
}

fn truncate(body: &str) -> &str {
    let end = body.char_indices().nth(200).map(|(i, _)| i).unwrap_or(body.len());
    &body[..end]
}

impl Provider for ChatCompletionsProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, ProviderFailure> {
        let body = request_body(request).to_string();
        let result = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .header(self.auth_header.as_str(), self.auth_value())
            .send(body);
        match result {
            Ok(mut response) => {
                let status = response.status().as_u16();
                let text = response
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| ProviderFailure::Transient(format!("reading body: {e}")))?;
                parse_reply(status, &text)
            }
            Err(ureq::Error::Timeout(_)) => Err(ProviderFailure::Timeout),
            Err(ureq::Error::Io(e)) => Err(ProviderFailure::Transient(e.to_string())),
            Err(ureq::Error::ConnectionFailed) | Err(ureq::Error::HostNotFound) => {
                Err(ProviderFailure::Transient("connection failed".into()))
            }
            Err(e) => Err(ProviderFailure::Fatal(e.to_string())),
        }
    }
}
