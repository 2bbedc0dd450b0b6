//! The four LLM agents: prompt rendering, chat transport, response
//! extraction and token/cost accounting.

mod client;
mod extract;
mod prompt;
mod script;
mod transport;
mod usage;

#[cfg(feature = "http")]
mod http;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{ChatClient, RetryPolicy};
pub use extract::{
    extract_code_write, extract_compile_command, extract_wrapper_name, CodeWrite, CompileCommand,
    ExtractError, SHELL_METACHARACTERS,
};
#[cfg(feature = "http")]
pub use http::HttpTransport;
pub use prompt::{render_prompt, PromptBindings, RenderedPrompt, PLACEHOLDERS, TEMPLATE_VERSION};
pub use script::{Script, ScriptEntry, ScriptedTransport};
pub use transport::{
    CallSite, ChatRequest, ChatResponse, ToolCall, Transport, TransportError, Usage,
};
pub use usage::{accumulate_usage, Pricing, RoleUsage, UsageSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Planner,
    Coder,
    Compiler,
    Debugger,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Planner,
        AgentRole::Coder,
        AgentRole::Compiler,
        AgentRole::Debugger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Planner => "planner",
            AgentRole::Coder => "coder",
            AgentRole::Compiler => "compiler",
            AgentRole::Debugger => "debugger",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("template placeholder {{{0}}} has no binding")]
    UnboundPlaceholder(String),
    #[error("binding for {{{name}}} contains the unresolved token {{{token}}}")]
    NestedPlaceholder { name: String, token: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    TransportExhausted { attempts: u32, last: String },
    #[error("endpoint rejected credentials: {0}")]
    AuthError(String),
    #[error("endpoint returned an empty response")]
    EmptyResponse,
    #[error("transport error: {0}")]
    Transport(String),
}

/// One completed chat call with its accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub role: AgentRole,
    pub site: CallSite,
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub attempt: u32,
    /// Token counts were estimated from character counts.
    pub estimated: bool,
}

/// An agent reply: the exchange always, plus the extracted artifact or the
/// reason extraction failed.
#[derive(Debug)]
pub struct AgentReply<T> {
    pub exchange: ChatExchange,
    pub artifact: Result<T, ExtractError>,
}

/// Binds the templates to a chat client and the fixed hardware description.
#[derive(Clone)]
pub struct Agents {
    client: ChatClient,
    hardware_info: String,
}

impl Agents {
    pub fn new(client: ChatClient, hardware_info: impl Into<String>) -> Self {
        Agents {
            client,
            hardware_info: hardware_info.into(),
        }
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        self.client.transport()
    }

    fn call(
        &self,
        role: AgentRole,
        site: CallSite,
        bindings: PromptBindings,
    ) -> Result<ChatExchange, AgentError> {
        let bindings = bindings.with("info", &self.hardware_info);
        let rendered = render_prompt(role, &bindings)?;
        self.client
            .chat(role, site, &rendered.system, &rendered.user)
    }

    /// Proposes one optimization scheme.
    pub fn plan(
        &self,
        site: CallSite,
        code: &str,
        description: &str,
        result_log: &str,
        former_plan: &str,
    ) -> Result<ChatExchange, AgentError> {
        let bindings = PromptBindings::new()
            .with("code_file_content", code)
            .with("description", description)
            .with("result_log", result_log)
            .with("former_plan", former_plan);
        self.call(AgentRole::Planner, site, bindings)
    }

    /// Rewrites `code` following `instructions` into `dst_file_name`.
    pub fn code(
        &self,
        site: CallSite,
        code: &str,
        instructions: &str,
        dst_file_name: &str,
    ) -> Result<AgentReply<CodeWrite>, AgentError> {
        let bindings = PromptBindings::new()
            .with("code_file_content", code)
            .with("instructions", instructions)
            .with("dst_file_name", dst_file_name);
        let exchange = self.call(AgentRole::Coder, site, bindings)?;
        let artifact =
            extract_code_write(&exchange.response_text, &exchange.tool_calls, dst_file_name);
        Ok(AgentReply { exchange, artifact })
    }

    /// Produces the build command for the candidate.
    pub fn compile_command(
        &self,
        site: CallSite,
        code: &str,
        origin_command: &str,
    ) -> Result<AgentReply<CompileCommand>, AgentError> {
        let bindings = PromptBindings::new()
            .with("code_file_content", code)
            .with("origin_command", origin_command);
        let exchange = self.call(AgentRole::Compiler, site, bindings)?;
        let artifact = extract_compile_command(&exchange.response_text);
        Ok(AgentReply { exchange, artifact })
    }

    /// Diagnoses a failing candidate and returns a fix description.
    pub fn debug(
        &self,
        site: CallSite,
        kernel_name: &str,
        description: &str,
        code: &str,
        error_log: &str,
    ) -> Result<ChatExchange, AgentError> {
        let bindings = PromptBindings::new()
            .with("kernel_name", kernel_name)
            .with("description", description)
            .with("code_file_content", code)
            .with("result_log", error_log);
        self.call(AgentRole::Debugger, site, bindings)
    }
}
