use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::agents::{AgentRole, CallSite, ChatExchange};
use crate::toolchain::Outcome;

/// Checkpoint file inside a task's run directory.
pub const STATE_FILE: &str = "state.json";

const ERROR_PLAN_PREFIX: &str = "All error plan: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub round: u32,
    pub scheme: String,
    pub status: SchemeStatus,
}

/// Planner schemes in round order. The baseline is implicit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeLedger {
    pub entries: Vec<SchemeEntry>,
}

impl SchemeLedger {
    pub fn statuses(&self) -> Vec<SchemeStatus> {
        self.entries.iter().map(|e| e.status).collect()
    }
}

/// History handed to the planner: accepted schemes first, then all rejected
/// ones under a single error prefix.
pub fn format_former_plan(ledger: &SchemeLedger) -> String {
    if ledger.entries.is_empty() {
        return "Baseline".to_string();
    }
    let pick = |status| {
        ledger
            .entries
            .iter()
            .filter(move |e| e.status == status)
            .map(|e| e.scheme.trim())
            .collect::<Vec<_>>()
    };
    let accepted = pick(SchemeStatus::Accepted);
    let rejected = pick(SchemeStatus::Rejected);
    let mut sections = Vec::new();
    if !accepted.is_empty() {
        sections.push(accepted.join("\n\n"));
    }
    if !rejected.is_empty() {
        sections.push(format!("{ERROR_PLAN_PREFIX}{}", rejected.join("\n\n")));
    }
    sections.join("\n\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub round: u32,
    pub debug: u32,
    pub valid: bool,
    pub score: Option<f64>,
    /// First line of the failure log for invalid candidates.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub task: String,
    pub baseline: Outcome,
    pub best_code: String,
    pub best_command: String,
    pub best_score: f64,
    pub best_outcome: Outcome,
    /// Round that produced the best program; 0 for the baseline.
    pub best_round: u32,
    pub ledger: SchemeLedger,
    pub completed_rounds: u32,
    pub candidates: Vec<CandidateSummary>,
    pub exchanges: Vec<ChatExchange>,
}

impl RunState {
    pub fn calls(&self, role: AgentRole) -> usize {
        self.exchanges.iter().filter(|e| e.role == role).count()
    }

    pub(crate) fn consumed_sites(&self) -> Vec<(AgentRole, CallSite)> {
        self.exchanges.iter().map(|e| (e.role, e.site)).collect()
    }

    /// Best score over all valid generated candidates, which may be below
    /// the baseline.
    pub fn best_candidate_score(&self) -> Option<f64> {
        self.candidates
            .iter()
            .filter(|c| c.valid)
            .filter_map(|c| c.score)
            .reduce(f64::max)
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(STATE_FILE);
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        let json = serde_json::to_string_pretty(self).expect("run state serializes");
        let io = |e: std::io::Error| PipelineError::Io {
            path: path.clone(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(&tmp, json).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Option<RunState>, PipelineError> {
        let path = dir.join(STATE_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(PipelineError::Io {
                    path,
                    message: e.to_string(),
                })
            }
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| PipelineError::Io {
                path,
                message: e.to_string(),
            })
    }
}
