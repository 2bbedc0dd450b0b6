use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AgentRole;

/// Where in the optimization loop a call happens. `debug` is 0 for the
/// primary attempt of a round and `d` for the d-th debug attempt.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct CallSite {
    pub round: u32,
    pub debug: u32,
}

impl CallSite {
    pub fn new(round: u32, debug: u32) -> Self {
        CallSite { round, debug }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub role: AgentRole,
    pub site: CallSite,
    pub model: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
    /// Offer the `write_file` tool to the model.
    pub offer_write_tool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    /// Raw JSON arguments as sent by the model.
    pub arguments: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub tool_calls: Vec<ToolCall>,
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    /// Timeouts, rate limits, 5xx: worth retrying.
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
}

/// A chat-completion endpoint.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;

    /// Called on resume with the calls that already happened, so replaying
    /// transports can skip the responses they consumed.
    fn fast_forward(&self, _consumed: &[(AgentRole, CallSite)]) {}
}
