use std::collections::BTreeMap;

use super::{AgentError, AgentRole};

/// Bumped whenever a template file changes.
pub const TEMPLATE_VERSION: u32 = 1;

/// Every placeholder any template may contain.
pub const PLACEHOLDERS: [&str; 9] = [
    "info",
    "code_file_content",
    "description",
    "result_log",
    "former_plan",
    "instructions",
    "dst_file_name",
    "origin_command",
    "kernel_name",
];

const PLANNER_SYSTEM: &str = include_str!("../../templates/planner_system.txt");
const PLANNER_USER: &str = include_str!("../../templates/planner_user.txt");
const CODER_SYSTEM: &str = include_str!("../../templates/coder_system.txt");
const CODER_USER: &str = include_str!("../../templates/coder_user.txt");
const COMPILER_SYSTEM: &str = include_str!("../../templates/compiler_system.txt");
const COMPILER_USER: &str = include_str!("../../templates/compiler_user.txt");
const DEBUGGER_SYSTEM: &str = include_str!("../../templates/debugger_system.txt");
const DEBUGGER_USER: &str = include_str!("../../templates/debugger_user.txt");

fn templates(role: AgentRole) -> (&'static str, &'static str) {
    match role {
        AgentRole::Planner => (PLANNER_SYSTEM, PLANNER_USER),
        AgentRole::Coder => (CODER_SYSTEM, CODER_USER),
        AgentRole::Compiler => (COMPILER_SYSTEM, COMPILER_USER),
        AgentRole::Debugger => (DEBUGGER_SYSTEM, DEBUGGER_USER),
    }
}

fn is_placeholder(name: &str) -> bool {
    PLACEHOLDERS.contains(&name)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptBindings {
    values: BTreeMap<String, String>,
}

impl PromptBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.values.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
    /// Bindings that no placeholder of this role consumed.
    pub unused: Vec<String>,
}

/// Splits `text` at `{name}` placeholder tokens. Braces that do not form a
/// known placeholder stay literal.
fn tokens(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let name = &after[..close];
        if is_placeholder(name) {
            pieces.push(Piece::Literal(&rest[..open]));
            pieces.push(Piece::Slot(name));
            rest = &after[close + 1..];
        } else {
            pieces.push(Piece::Literal(&rest[..open + 1]));
            rest = after;
        }
    }
    pieces.push(Piece::Literal(rest));
    pieces
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn fill(
    template: &str,
    bindings: &PromptBindings,
    used: &mut Vec<String>,
) -> Result<String, AgentError> {
    let mut out = String::with_capacity(template.len());
    for piece in tokens(template) {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Slot(name) => {
                let value = bindings
                    .get(name)
                    .ok_or_else(|| AgentError::UnboundPlaceholder(name.to_string()))?;
                out.push_str(value);
                used.push(name.to_string());
            }
        }
    }
    Ok(out)
}

/// Renders the system and user prompt of `role` in a single substitution
/// pass. Binding values are inserted verbatim and never re-scanned.
pub fn render_prompt(
    role: AgentRole,
    bindings: &PromptBindings,
) -> Result<RenderedPrompt, AgentError> {
    for (name, value) in &bindings.values {
        for piece in tokens(value) {
            if let Piece::Slot(token) = piece {
                return Err(AgentError::NestedPlaceholder {
                    name: name.clone(),
                    token: token.to_string(),
                });
            }
        }
    }

    let (system_t, user_t) = templates(role);
    let mut used = Vec::new();
    let system = fill(system_t, bindings, &mut used)?;
    let user = fill(user_t, bindings, &mut used)?;

    let unused: Vec<String> = bindings
        .values
        .keys()
        .filter(|k| !used.contains(k))
        .cloned()
        .collect();
    for name in &unused {
        tracing::warn!(role = %role, "binding {{{name}}} is not used by the template");
    }
    Ok(RenderedPrompt {
        system,
        user,
        unused,
    })
}
