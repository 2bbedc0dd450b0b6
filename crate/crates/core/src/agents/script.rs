//! Replays canned agent responses from a TOML script. Used for offline runs
//! and tests.
//!
//! ```toml
//! [[response]]
//! role = "planner"
//! round = 1          # optional
//! debug = 0          # optional, 0 is the primary attempt
//! task = "dot"       # optional
//! text = "Use shared memory tiling."
//! prompt_tokens = 1200
//! completion_tokens = 300
//! ```

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::transport::{
    CallSite, ChatRequest, ChatResponse, ToolCall, Transport, TransportError, Usage,
};
use super::AgentRole;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: AgentRole,
    #[serde(default)]
    pub round: Option<u32>,
    #[serde(default)]
    pub debug: Option<u32>,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

impl ScriptEntry {
    pub fn new(role: AgentRole, text: impl Into<String>) -> Self {
        ScriptEntry {
            role,
            round: None,
            debug: None,
            task: None,
            text: text.into(),
            tool_calls: Vec::new(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn at(mut self, round: u32, debug: u32) -> Self {
        self.round = Some(round);
        self.debug = Some(debug);
        self
    }

    pub fn for_task(mut self, task: &str) -> Self {
        self.task = Some(task.to_string());
        self
    }

    fn matches(&self, role: AgentRole, site: CallSite) -> bool {
        self.role == role
            && self.round.is_none_or(|r| r == site.round)
            && self.debug.is_none_or(|d| d == site.debug)
    }

    fn response(&self) -> ChatResponse {
        let usage = match (self.prompt_tokens, self.completion_tokens) {
            (Some(p), Some(c)) => Some(Usage {
                prompt_tokens: p,
                completion_tokens: c,
            }),
            _ => None,
        };
        ChatResponse {
            text: self.text.clone(),
            tool_calls: self.tool_calls.clone(),
            usage,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default, rename = "response")]
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serializes")
    }

    /// Entries that apply to `task`: untagged ones plus those tagged with it.
    pub fn for_task(&self, task: &str) -> Script {
        Script {
            entries: self
                .entries
                .iter()
                .filter(|e| e.task.as_deref().is_none_or(|t| t == task))
                .cloned()
                .collect(),
        }
    }
}

/// Serves the first unused entry matching the requested role and call site.
pub struct ScriptedTransport {
    entries: Vec<ScriptEntry>,
    used: Mutex<Vec<bool>>,
}

impl ScriptedTransport {
    pub fn new(script: Script) -> Self {
        let used = vec![false; script.entries.len()];
        ScriptedTransport {
            entries: script.entries,
            used: Mutex::new(used),
        }
    }

    fn take(&self, role: AgentRole, site: CallSite) -> Option<usize> {
        let mut used = self.used.lock().expect("script lock");
        let idx = self
            .entries
            .iter()
            .enumerate()
            .position(|(i, e)| !used[i] && e.matches(role, site))?;
        used[idx] = true;
        Some(idx)
    }

    pub fn remaining(&self) -> usize {
        self.used
            .lock()
            .expect("script lock")
            .iter()
            .filter(|u| !**u)
            .count()
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        match self.take(request.role, request.site) {
            Some(idx) => Ok(self.entries[idx].response()),
            None => Err(TransportError::Fatal(format!(
                "script has no response left for {} at round {} debug {}",
                request.role, request.site.round, request.site.debug
            ))),
        }
    }

    fn fast_forward(&self, consumed: &[(AgentRole, CallSite)]) {
        for &(role, site) in consumed {
            self.take(role, site);
        }
    }
}
