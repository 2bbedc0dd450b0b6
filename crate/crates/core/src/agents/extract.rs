use std::fmt;

use serde::Deserialize;
use thiserror::Error;

use super::ToolCall;

/// Characters that would only mean something to a shell.
pub const SHELL_METACHARACTERS: &[char] =
    &[';', '|', '&', '$', '(', ')', '`', '<', '>', '\'', '"', '\\'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("response contains no code")]
    NoCode,
    #[error("write_file tool call has malformed arguments: {0}")]
    BadToolCall(String),
    #[error("code defines no kernel with the _kernel_optimized suffix")]
    MissingOptimizedKernel,
    #[error("response names no <..._optimized> wrapper")]
    NoWrapperName,
    #[error("compile command is empty")]
    EmptyCommand,
    #[error("compile command spans {0} lines")]
    MultiLineCommand(usize),
    #[error("compile command does not invoke nvcc: {0}")]
    NotNvcc(String),
    #[error("compile command contains suspicious token {0:?}")]
    SuspiciousToken(String),
}

/// A sanitized compiler invocation, executed as an argv without a shell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileCommand(Vec<String>);

impl CompileCommand {
    /// Splits and checks a single command line.
    pub fn parse(line: &str) -> Result<Self, ExtractError> {
        let line = line.trim();
        if line.is_empty() {
            return Err(ExtractError::EmptyCommand);
        }
        let lines = line.lines().filter(|l| !l.trim().is_empty()).count();
        if lines > 1 {
            return Err(ExtractError::MultiLineCommand(lines));
        }
        let argv: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if argv[0] != "nvcc" {
            return Err(ExtractError::NotNvcc(argv[0].clone()));
        }
        if let Some(bad) = argv.iter().find(|t| t.contains(SHELL_METACHARACTERS)) {
            return Err(ExtractError::SuspiciousToken(bad.clone()));
        }
        Ok(CompileCommand(argv))
    }

    pub fn argv(&self) -> &[String] {
        &self.0
    }

    /// Path following `-o`, if any.
    pub fn output(&self) -> Option<&str> {
        self.0
            .iter()
            .position(|t| t == "-o")
            .and_then(|i| self.0.get(i + 1))
            .map(String::as_str)
    }

    /// Replaces the `-o` target, appending one if absent.
    pub fn with_output(mut self, path: &str) -> Self {
        match self.0.iter().position(|t| t == "-o") {
            Some(i) if i + 1 < self.0.len() => self.0[i + 1] = path.to_string(),
            Some(_) => self.0.push(path.into()),
            None => {
                self.0.push("-o".into());
                self.0.push(path.into());
            }
        }
        self
    }
}

impl fmt::Display for CompileCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Pulls the compile command out of a Compiler reply, tolerating a code fence.
pub fn extract_compile_command(text: &str) -> Result<CompileCommand, ExtractError> {
    let body = fenced_blocks(text)
        .into_iter()
        .next()
        .map(|b| b.body)
        .unwrap_or(text);
    CompileCommand::parse(body)
}

/// Last `<name_optimized>` token in `text`.
pub fn extract_wrapper_name(text: &str) -> Option<String> {
    let mut found = None;
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        let end = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..end];
        if after[end..].starts_with('>')
            && name.ends_with("_optimized")
            && name.len() > "_optimized".len()
        {
            found = Some(name.to_string());
        }
        rest = after;
    }
    found
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeWrite {
    pub path: String,
    pub code: String,
    pub wrapper_name: String,
    pub via_tool: bool,
}

#[derive(Deserialize)]
struct WriteFileArgs {
    #[serde(alias = "file_path", alias = "filename")]
    path: Option<String>,
    #[serde(alias = "code")]
    content: String,
}

/// The candidate source from a Coder reply: the `write_file` tool call if
/// present, otherwise the largest fenced code block.
pub fn extract_code_write(
    text: &str,
    tool_calls: &[ToolCall],
    dst_file_name: &str,
) -> Result<CodeWrite, ExtractError> {
    let (path, code, via_tool) = match tool_calls.iter().rev().find(|c| c.name == "write_file") {
        Some(call) => {
            let args: WriteFileArgs = serde_json::from_str(&call.arguments)
                .map_err(|e| ExtractError::BadToolCall(e.to_string()))?;
            (
                args.path.unwrap_or_else(|| dst_file_name.to_string()),
                args.content,
                true,
            )
        }
        None => {
            let block = fenced_blocks(text)
                .into_iter()
                .max_by_key(|b| b.body.len())
                .ok_or(ExtractError::NoCode)?;
            (dst_file_name.to_string(), block.body.to_string(), false)
        }
    };
    if code.trim().is_empty() {
        return Err(ExtractError::NoCode);
    }
    if !code.contains("_kernel_optimized") {
        return Err(ExtractError::MissingOptimizedKernel);
    }
    let wrapper_name = extract_wrapper_name(text)
        .or_else(|| wrapper_in_code(&code))
        .ok_or(ExtractError::NoWrapperName)?;
    Ok(CodeWrite {
        path,
        code,
        wrapper_name,
        via_tool,
    })
}

/// First `extern "C"` function whose name ends in `_optimized`.
fn wrapper_in_code(code: &str) -> Option<String> {
    code.match_indices("extern \"C\"").find_map(|(i, _)| {
        let head = &code[i..code[i..].find('(').map(|p| i + p)?];
        let name = head
            .rsplit(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .next()?;
        (name.ends_with("_optimized") && !name.ends_with("_kernel_optimized"))
            .then(|| name.to_string())
    })
}

struct Fenced<'a> {
    body: &'a str,
}

fn fenced_blocks(text: &str) -> Vec<Fenced<'_>> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(nl) = after.find('\n') else { break };
        let content = &after[nl + 1..];
        let Some(close) = content.find("```") else {
            break;
        };
        blocks.push(Fenced {
            body: content[..close].trim_end_matches([' ', '\t']),
        });
        rest = &content[close + 3..];
    }
    blocks
}
