#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use kernelpilot_core::agents::{
    AgentRole, Agents, CallSite, ChatClient, ChatRequest, ChatResponse, RetryPolicy, Script,
    ScriptedTransport, Transport, TransportError,
};
use kernelpilot_core::pipeline::{Ablation, Pipeline, PipelineConfig, PipelineError, RunState};
use kernelpilot_core::sample::{scripted_rounds, write_sample_suite, Trial};
use kernelpilot_core::task::TaskManifest;
use kernelpilot_core::toolchain::MockBackend;

pub const HARDWARE: &str = "NVIDIA A100-SXM4-80GB, 108 SMs, 80 GB HBM2e";

pub fn agents_with(transport: Arc<dyn Transport>) -> Agents {
    let client = ChatClient::new(transport, "o4-mini").with_retry(RetryPolicy::immediate(0));
    Agents::new(client, HARDWARE)
}

pub fn agents(script: Script) -> Agents {
    agents_with(Arc::new(ScriptedTransport::new(script)))
}

pub fn sample_task(dir: &Path, name: &str) -> TaskManifest {
    write_sample_suite(dir)
        .unwrap()
        .into_iter()
        .find(|m| m.name == name)
        .unwrap()
}

pub fn run_trials(
    manifest: &TaskManifest,
    rounds: &[Vec<Trial>],
    ablation: Ablation,
    run_dir: &Path,
) -> Result<RunState, PipelineError> {
    let config = PipelineConfig::default().with_ablation(ablation);
    let agents = agents(scripted_rounds(manifest, rounds));
    let backend = MockBackend::new(0);
    Pipeline::new(manifest, &config, &agents, &backend, run_dir).run(false)
}

/// Parses "1.5", "X" (compile failure) into a trial list per round.
pub fn trials(rounds: &[&[&str]]) -> Vec<Vec<Trial>> {
    rounds
        .iter()
        .map(|round| {
            round
                .iter()
                .map(|t| match *t {
                    "X" => Trial::CompileFail,
                    s => Trial::Speedup(s.parse().unwrap()),
                })
                .collect()
        })
        .collect()
}

/// Delegates to `inner` and fails fatally once `budget` calls were served.
pub struct CrashAfter {
    pub inner: ScriptedTransport,
    pub budget: AtomicUsize,
}

impl Transport for CrashAfter {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        if self
            .budget
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| b.checked_sub(1))
            .is_err()
        {
            return Err(TransportError::Fatal("simulated crash".into()));
        }
        self.inner.complete(request)
    }

    fn fast_forward(&self, consumed: &[(AgentRole, CallSite)]) {
        self.inner.fast_forward(consumed)
    }
}

pub struct Expected {
    pub ablation: Ablation,
    /// planner, coder, compiler, debugger calls
    pub calls: [usize; 4],
    pub best: f64,
    pub ledger: &'static str,
}

pub struct Scenario {
    pub name: &'static str,
    pub rounds: &'static [&'static [&'static str]],
    pub expected: [Expected; 4],
}

const fn ex(ablation: Ablation, calls: [usize; 4], best: f64, ledger: &'static str) -> Expected {
    Expected {
        ablation,
        calls,
        best,
        ledger,
    }
}

use Ablation::{Full, NoDebug, SingleIteration, SingleRun};

/// Ledger strings use `A` for accepted and `R` for rejected schemes.
pub const SCENARIOS: [Scenario; 5] = [
    Scenario {
        name: "monotone gains",
        rounds: &[&["1.5"], &["1.4"], &["1.6"]],
        expected: [
            ex(Full, [3, 3, 3, 0], 1.6, "ARA"),
            ex(NoDebug, [3, 3, 3, 0], 1.6, "ARA"),
            ex(SingleIteration, [1, 1, 1, 0], 1.5, "A"),
            ex(SingleRun, [1, 1, 1, 0], 1.5, "A"),
        ],
    },
    Scenario {
        name: "debug rescues",
        rounds: &[&["X", "X", "1.5"], &["1.3"], &["X", "2.0"]],
        expected: [
            ex(Full, [3, 6, 6, 3], 2.0, "ARA"),
            ex(NoDebug, [3, 3, 3, 0], 1.3, "RAR"),
            ex(SingleIteration, [1, 3, 3, 2], 1.5, "A"),
            ex(SingleRun, [1, 1, 1, 0], 1.0, "R"),
        ],
    },
    Scenario {
        name: "debug exhausted",
        rounds: &[&["X", "X", "X", "X"], &["X", "X", "X", "1.1"], &["0.9"]],
        expected: [
            ex(Full, [3, 9, 9, 6], 1.1, "RAR"),
            ex(NoDebug, [3, 3, 3, 0], 1.0, "RRR"),
            ex(SingleIteration, [1, 4, 4, 3], 1.0, "R"),
            ex(SingleRun, [1, 1, 1, 0], 1.0, "R"),
        ],
    },
    Scenario {
        name: "strict improvement",
        rounds: &[&["0.8"], &["1.0"], &["1.2"]],
        expected: [
            ex(Full, [3, 3, 3, 0], 1.2, "RRA"),
            ex(NoDebug, [3, 3, 3, 0], 1.2, "RRA"),
            ex(SingleIteration, [1, 1, 1, 0], 1.0, "R"),
            ex(SingleRun, [1, 1, 1, 0], 1.0, "R"),
        ],
    },
    Scenario {
        name: "regression then gain",
        rounds: &[&["1.5"], &["1.2"], &["2.0"]],
        expected: [
            ex(Full, [3, 3, 3, 0], 2.0, "ARA"),
            ex(NoDebug, [3, 3, 3, 0], 2.0, "ARA"),
            ex(SingleIteration, [1, 1, 1, 0], 1.5, "A"),
            ex(SingleRun, [1, 1, 1, 0], 1.5, "A"),
        ],
    },
];

pub fn ledger_string(state: &RunState) -> String {
    use kernelpilot_core::pipeline::SchemeStatus;
    state
        .ledger
        .statuses()
        .iter()
        .map(|s| {
            if *s == SchemeStatus::Accepted {
                'A'
            } else {
                'R'
            }
        })
        .collect()
}

pub fn call_counts(state: &RunState) -> [usize; 4] {
    [
        AgentRole::Planner,
        AgentRole::Coder,
        AgentRole::Compiler,
        AgentRole::Debugger,
    ]
    .map(|r| state.calls(r))
}

/// Runs one scenario cell and returns a mismatch description, if any.
pub fn check_cell(
    manifest: &TaskManifest,
    scenario: &Scenario,
    e: &Expected,
    dir: &Path,
) -> Option<String> {
    let state = match run_trials(manifest, &trials(scenario.rounds), e.ablation, dir) {
        Ok(s) => s,
        Err(err) => return Some(format!("{} / {:?}: {err}", scenario.name, e.ablation)),
    };
    let got = (call_counts(&state), state.best_score, ledger_string(&state));
    if got.0 != e.calls || (got.1 - e.best).abs() > 1e-12 || got.2 != e.ledger {
        return Some(format!(
            "{} / {:?}: got calls {:?} best {} ledger {}, expected {:?} {} {}",
            scenario.name, e.ablation, got.0, got.1, got.2, e.calls, e.best, e.ledger
        ));
    }
    None
}
