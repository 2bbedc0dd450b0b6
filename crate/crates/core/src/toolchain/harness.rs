//! The harness stdout contract: per test size a `Test case size` line and a
//! `Speedup ratio` line, blocks closed by a `=====` line.

use serde::{Deserialize, Serialize};

use super::ToolchainError;

pub const BLOCK_SEPARATOR: &str = "=====";
const SIZE_PREFIX: &str = "Test case size: ";
const COMPLEXITY_INFIX: &str = ". Complexity: ";
const SPEEDUP_PREFIX: &str = "Speedup ratio: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub size_label: String,
    pub complexity: u64,
    pub speedup: f64,
}

pub fn render_blocks(results: &[SizeResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{SIZE_PREFIX}{}{COMPLEXITY_INFIX}{}\n{SPEEDUP_PREFIX}{}\n{BLOCK_SEPARATOR}\n",
            r.size_label, r.complexity, r.speedup
        ));
    }
    out
}

fn unparseable(line: usize, text: &str) -> ToolchainError {
    ToolchainError::UnparseableOutput {
        line,
        text: text.to_string(),
    }
}

/// Parses harness stdout. Blank lines and structured error objects (lines
/// starting with `{`) are skipped; anything else must follow the contract.
pub fn parse_blocks(stdout: &str) -> Result<Vec<SizeResult>, ToolchainError> {
    let mut results = Vec::new();
    let mut pending: Option<(String, u64)> = None;
    let mut closed = true;

    for (idx, raw) in stdout.lines().enumerate() {
        let n = idx + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('{') {
            continue;
        }
        if let Some(rest) = line.strip_prefix(SIZE_PREFIX) {
            if pending.is_some() || !closed {
                return Err(unparseable(n, line));
            }
            let split = rest
                .rfind(COMPLEXITY_INFIX)
                .ok_or_else(|| unparseable(n, line))?;
            let label = &rest[..split];
            let complexity: u64 = rest[split + COMPLEXITY_INFIX.len()..]
                .trim()
                .parse()
                .map_err(|_| unparseable(n, line))?;
            if label.is_empty() || complexity == 0 {
                return Err(unparseable(n, line));
            }
            pending = Some((label.to_string(), complexity));
        } else if let Some(rest) = line.strip_prefix(SPEEDUP_PREFIX) {
            let (size_label, complexity) = pending.take().ok_or_else(|| unparseable(n, line))?;
            let speedup: f64 = rest.trim().parse().map_err(|_| unparseable(n, line))?;
            if !(speedup.is_finite() && speedup > 0.0) {
                return Err(unparseable(n, line));
            }
            results.push(SizeResult {
                size_label,
                complexity,
                speedup,
            });
            closed = false;
        } else if line.trim() == BLOCK_SEPARATOR {
            if pending.is_some() || closed {
                return Err(unparseable(n, line));
            }
            closed = true;
        } else {
            return Err(unparseable(n, line));
        }
    }
    if let Some((label, _)) = pending {
        let last = stdout.lines().count();
        return Err(unparseable(
            last,
            &format!("{SIZE_PREFIX}{label} has no speedup line"),
        ));
    }
    Ok(results)
}

/// The first JSON object on stdout carrying a `mismatches` field.
pub fn find_mismatch_object(stdout: &str) -> Option<serde_json::Value> {
    stdout
        .lines()
        .filter(|l| l.trim_start().starts_with('{'))
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l.trim()).ok())
        .find(|v| v.get("mismatches").is_some())
}
