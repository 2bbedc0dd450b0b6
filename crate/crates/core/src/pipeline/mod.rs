//! The plan / code / compile / evaluate loop with its bounded debug
//! sub-loop, best-candidate tracking, persistence and resume.

mod run;
mod state;
mod suite;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::profile::{ProfileMode, ThresholdSet};

pub use run::Pipeline;
pub use state::{
    format_former_plan, CandidateSummary, RunState, SchemeEntry, SchemeLedger, SchemeStatus,
    STATE_FILE,
};
pub use suite::{profile_baselines, run_suite, SuiteRun, TaskRun};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("baseline of {task} is not valid: {log}")]
    BaselineInvalid { task: String, log: String },
    #[error("agent call failed in round {round}: {source}")]
    Agent {
        round: u32,
        #[source]
        source: AgentError,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// The four loop shapes compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoDebug,
    SingleIteration,
    SingleRun,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoDebug,
        Ablation::SingleIteration,
        Ablation::SingleRun,
    ];

    /// (rounds, debug rounds)
    pub fn limits(self) -> (u32, u32) {
        match self {
            Ablation::Full => (3, 3),
            Ablation::NoDebug => (3, 0),
            Ablation::SingleIteration => (1, 3),
            Ablation::SingleRun => (1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rounds: u32,
    pub debug_rounds: u32,
    pub profile_mode: ProfileMode,
    pub thresholds: ThresholdSet,
    pub model: String,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rounds: 3,
            debug_rounds: 3,
            profile_mode: ProfileMode::Filtered,
            thresholds: ThresholdSet::default(),
            model: "o4-mini".into(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        (self.rounds, self.debug_rounds) = ablation.limits();
        self
    }
}
