use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::transport::{CallSite, ChatRequest, Transport, TransportError};
use super::usage::{estimate_tokens, Pricing};
use super::{AgentError, AgentRole, ChatExchange};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_secs(2),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Sends prompts through a transport with retries and usage accounting.
#[derive(Clone)]
pub struct ChatClient {
    transport: Arc<dyn Transport>,
    model: String,
    temperature: f64,
    pricing: Pricing,
    retry: RetryPolicy,
}

impl ChatClient {
    pub fn new(transport: Arc<dyn Transport>, model: impl Into<String>) -> Self {
        ChatClient {
            transport,
            model: model.into(),
            temperature: 0.2,
            pricing: Pricing::default(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    pub fn chat(
        &self,
        role: AgentRole,
        site: CallSite,
        system: &str,
        user: &str,
    ) -> Result<ChatExchange, AgentError> {
        let request = ChatRequest {
            role,
            site,
            model: self.model.clone(),
            temperature: self.temperature,
            system: system.to_string(),
            user: user.to_string(),
            offer_write_tool: role == AgentRole::Coder,
        };

        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            match self.transport.complete(&request) {
                Ok(r) => break r,
                Err(TransportError::Transient(msg)) => {
                    if attempt > self.retry.max_retries {
                        return Err(AgentError::TransportExhausted {
                            attempts: attempt,
                            last: msg,
                        });
                    }
                    let delay = self.retry.delay(attempt);
                    tracing::warn!(%role, attempt, ?delay, "transient transport error: {msg}");
                    thread::sleep(delay);
                }
                Err(TransportError::Auth(msg)) => return Err(AgentError::AuthError(msg)),
                Err(TransportError::Fatal(msg)) => return Err(AgentError::Transport(msg)),
            }
        };

        if response.text.trim().is_empty() && response.tool_calls.is_empty() {
            return Err(AgentError::EmptyResponse);
        }

        let (prompt_tokens, completion_tokens, estimated) = match response.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens, false),
            None => {
                let completion_chars: String = std::iter::once(response.text.as_str())
                    .chain(response.tool_calls.iter().map(|c| c.arguments.as_str()))
                    .collect();
                (
                    estimate_tokens(system) + estimate_tokens(user),
                    estimate_tokens(&completion_chars),
                    true,
                )
            }
        };

        Ok(ChatExchange {
            role,
            site,
            system_text: request.system,
            user_text: request.user,
            response_text: response.text,
            tool_calls: response.tool_calls,
            prompt_tokens,
            completion_tokens,
            cost_usd: self.pricing.cost(prompt_tokens, completion_tokens),
            attempt,
            estimated,
        })
    }
}
