//! OpenAI-compatible `chat/completions` client.

use std::time::Duration;

use serde_json::{json, Value};

use super::transport::{ChatRequest, ChatResponse, ToolCall, Transport, TransportError, Usage};

pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`. The key
    /// is read from the environment variable `key_env`.
    pub fn new(base_url: &str, key_env: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Fatal(e.to_string()))?;
        Ok(HttpTransport {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: std::env::var(key_env).ok().filter(|k| !k.is_empty()),
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let key = self.api_key.as_deref().ok_or_else(|| {
            TransportError::Auth("no API key in the configured environment variable".into())
        })?;
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key)
            .json(&request_body(request))
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        if let Some(err) = status_error(status, &body) {
            return Err(err);
        }
        parse_response(&body)
    }
}

fn write_file_tool() -> Value {
    json!({
        "type": "function",
        "function": {
            "name": "write_file",
            "description": "Write the complete contents of a source file.",
            "parameters": {
                "type": "object",
                "properties": {
                    "path": {"type": "string"},
                    "content": {"type": "string"}
                },
                "required": ["path", "content"]
            }
        }
    })
}

pub(crate) fn request_body(request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": request.user}
        ]
    });
    if request.offer_write_tool {
        body["tools"] = json!([write_file_tool()]);
    }
    body
}

pub(crate) fn status_error(status: u16, body: &str) -> Option<TransportError> {
    let snippet: String = body.chars().take(300).collect();
    match status {
        200..=299 => None,
        401 | 403 => Some(TransportError::Auth(format!("HTTP {status}: {snippet}"))),
        408 | 429 | 500..=599 => Some(TransportError::Transient(format!(
            "HTTP {status}: {snippet}"
        ))),
        _ => Some(TransportError::Fatal(format!("HTTP {status}: {snippet}"))),
    }
}

pub(crate) fn parse_response(body: &str) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| TransportError::Transient(format!("unparseable response: {e}")))?;
    let message = &v["choices"][0]["message"];
    if message.is_null() {
        return Err(TransportError::Transient("response has no choices".into()));
    }
    let text = message["content"].as_str().unwrap_or_default().to_string();
    let tool_calls = message["tool_calls"]
        .as_array()
        .map(|calls| {
            calls
                .iter()
                .filter_map(|c| {
                    Some(ToolCall {
                        name: c["function"]["name"].as_str()?.to_string(),
                        arguments: c["function"]["arguments"]
                            .as_str()
                            .unwrap_or("{}")
                            .to_string(),
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    let usage = match (
        v["usage"]["prompt_tokens"].as_u64(),
        v["usage"]["completion_tokens"].as_u64(),
    ) {
        (Some(p), Some(c)) => Some(Usage {
            prompt_tokens: p,
            completion_tokens: c,
        }),
        _ => None,
    };
    Ok(ChatResponse {
        text,
        tool_calls,
        usage,
    })
}
