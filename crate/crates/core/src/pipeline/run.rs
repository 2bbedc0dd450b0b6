use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::state::{
    format_former_plan, CandidateSummary, RunState, SchemeEntry, SchemeLedger, SchemeStatus,
};
use super::{PipelineConfig, PipelineError};
use crate::agents::{AgentError, Agents, CallSite, ChatExchange, CompileCommand};
use crate::evaluation::Score;
use crate::profile::{render_profile_context, FilteredProfile, ProfileReport};
use crate::task::TaskManifest;
use crate::toolchain::{
    baseline_shim, candidate_file_name, execute_and_filter, optimized_wrapper_name, render_blocks,
    Backend, CandidateSource, Outcome,
};

/// One task's optimization run.
pub struct Pipeline<'a> {
    manifest: &'a TaskManifest,
    config: &'a PipelineConfig,
    agents: &'a Agents,
    backend: &'a dyn Backend,
    run_dir: PathBuf,
}

struct Attempt {
    /// Extracted code, or the code the coder was asked to change when
    /// extraction failed.
    code: String,
    command: Option<String>,
    outcome: Outcome,
    score: Score,
}

#[derive(Serialize)]
struct PersistedOutcome<'a> {
    outcome: &'a Outcome,
    score: &'a Score,
}

#[derive(Serialize)]
struct PersistedProfile<'a> {
    filtered: &'a [FilteredProfile],
    raw: &'a [ProfileReport],
}

fn candidate_dir_name(round: u32, debug: u32) -> String {
    if debug == 0 {
        round.to_string()
    } else {
        format!("{round}.debug-{debug}")
    }
}

fn first_line(text: &str) -> Option<String> {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| l.trim().to_string())
}

impl<'a> Pipeline<'a> {
    /// `run_dir` is this task's directory, e.g. `runs/matrix_mul`.
    pub fn new(
        manifest: &'a TaskManifest,
        config: &'a PipelineConfig,
        agents: &'a Agents,
        backend: &'a dyn Backend,
        run_dir: impl Into<PathBuf>,
    ) -> Self {
        Pipeline {
            manifest,
            config,
            agents,
            backend,
            run_dir: run_dir.into(),
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn io_err(&self, path: &Path, e: impl ToString) -> PipelineError {
        PipelineError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn agent_err(round: u32) -> impl FnOnce(AgentError) -> PipelineError {
        move |source| PipelineError::Agent { round, source }
    }

    /// Runs the loop, or continues it from the checkpoint when `resume` is
    /// set and one exists.
    pub fn run(&self, resume: bool) -> Result<RunState, PipelineError> {
        let restored = if resume {
            RunState::load(&self.run_dir)?
        } else {
            None
        };
        let mut state = match restored {
            Some(state) if state.task == self.manifest.name => {
                tracing::info!(task = %state.task, rounds = state.completed_rounds, "resuming from checkpoint");
                self.agents
                    .transport()
                    .fast_forward(&state.consumed_sites());
                state
            }
            _ => {
                let state = self.baseline()?;
                state.save(&self.run_dir)?;
                state
            }
        };

        for round in state.completed_rounds + 1..=self.config.rounds {
            self.round(&mut state, round)?;
            state.completed_rounds = round;
            state.save(&self.run_dir)?;
        }
        Ok(state)
    }

    fn baseline(&self) -> Result<RunState, PipelineError> {
        let path = self.manifest.baseline_source_path();
        let code = fs::read_to_string(&path).map_err(|e| self.io_err(&path, e))?;
        let command =
            CompileCommand::parse(&self.manifest.baseline_compile_command).map_err(|e| {
                PipelineError::BaselineInvalid {
                    task: self.manifest.name.clone(),
                    log: format!("baseline compile command: {e}"),
                }
            })?;
        let dir = self.run_dir.join(candidate_dir_name(0, 0));
        let shim = baseline_shim(self.manifest);
        let outcome = execute_and_filter(
            self.backend,
            self.manifest,
            &CandidateSource {
                workdir: &dir,
                code: &shim,
                command: &command,
            },
            &self.config.thresholds,
            self.config.profile_mode,
        );
        let score = Score::from_outcome(&outcome, self.manifest);
        self.persist(
            &dir,
            "Baseline",
            &code,
            Some(&command.to_string()),
            &outcome,
            &score,
            &[],
        )?;
        if !score.valid {
            return Err(PipelineError::BaselineInvalid {
                task: self.manifest.name.clone(),
                log: outcome.failure_log,
            });
        }
        Ok(RunState {
            task: self.manifest.name.clone(),
            baseline: outcome.clone(),
            best_code: code,
            best_command: command.to_string(),
            best_score: 1.0,
            best_outcome: outcome,
            best_round: 0,
            ledger: SchemeLedger::default(),
            completed_rounds: 0,
            candidates: Vec::new(),
            exchanges: Vec::new(),
        })
    }

    /// Harness results of the current best followed by its profile context.
    pub fn planner_log(&self, outcome: &Outcome) -> String {
        let blocks = render_blocks(&outcome.size_results);
        let context = render_profile_context(
            &outcome.filtered_profiles,
            self.config.profile_mode,
            &outcome.raw_profiles,
        );
        if context.is_empty() {
            blocks
        } else {
            format!("{blocks}\n{context}")
        }
    }

    fn round(&self, state: &mut RunState, round: u32) -> Result<(), PipelineError> {
        let former_plan = format_former_plan(&state.ledger);
        let result_log = self.planner_log(&state.best_outcome);
        let plan = self
            .agents
            .plan(
                CallSite::new(round, 0),
                &state.best_code,
                &self.manifest.description,
                &result_log,
                &former_plan,
            )
            .map_err(Self::agent_err(round))?;
        let scheme = plan.response_text.trim().to_string();
        state.exchanges.push(plan);

        let base = state.best_code.clone();
        let mut attempt = self.attempt(state, round, 0, &scheme, &base, &scheme)?;
        let mut debug = 0;
        while !attempt.score.valid && debug < self.config.debug_rounds {
            debug += 1;
            let fix = self
                .agents
                .debug(
                    CallSite::new(round, debug),
                    &self.manifest.wrapper_name,
                    &self.manifest.description,
                    &attempt.code,
                    &attempt.outcome.failure_log,
                )
                .map_err(Self::agent_err(round))?;
            let instructions = fix.response_text.trim().to_string();
            state.exchanges.push(fix);
            let failing = attempt.code.clone();
            attempt = self.attempt(state, round, debug, &instructions, &failing, &scheme)?;
        }

        let improved = attempt.score.valid && attempt.score.p > state.best_score;
        let status = if improved {
            state.best_code = attempt.code;
            state.best_command = attempt.command.unwrap_or_default();
            state.best_score = attempt.score.p;
            state.best_outcome = attempt.outcome;
            state.best_round = round;
            SchemeStatus::Accepted
        } else {
            SchemeStatus::Rejected
        };
        tracing::info!(task = %self.manifest.name, round, ?status, best = state.best_score, "round finished");
        state.ledger.entries.push(SchemeEntry {
            round,
            scheme,
            status,
        });
        Ok(())
    }

    /// Coder, compiler agent and evaluation for one candidate.
    fn attempt(
        &self,
        state: &mut RunState,
        round: u32,
        debug: u32,
        instructions: &str,
        base_code: &str,
        scheme: &str,
    ) -> Result<Attempt, PipelineError> {
        let site = CallSite::new(round, debug);
        let dir = self.run_dir.join(candidate_dir_name(round, debug));
        let first_exchange = state.exchanges.len();
        let file_name = candidate_file_name(self.manifest);

        let reply = self
            .agents
            .code(site, base_code, instructions, &file_name)
            .map_err(Self::agent_err(round))?;
        state.exchanges.push(reply.exchange);

        let expected = optimized_wrapper_name(self.manifest);
        let mut command = None;
        let (code, outcome) = match reply.artifact {
            Err(e) => (
                base_code.to_string(),
                Outcome::failed(format!("Code extraction failed: {e}")),
            ),
            Ok(w) if w.wrapper_name != expected => (
                w.code,
                Outcome::failed(format!(
                    "Wrapper name {} does not match the required {expected}",
                    w.wrapper_name
                )),
            ),
            Ok(w) => {
                let compiler = self
                    .agents
                    .compile_command(site, &w.code, &state.best_command)
                    .map_err(Self::agent_err(round))?;
                state.exchanges.push(compiler.exchange);
                let outcome = match compiler.artifact {
                    Err(e) => Outcome::failed(format!("Compile command rejected: {e}")),
                    Ok(cmd) => {
                        command = Some(cmd.to_string());
                        execute_and_filter(
                            self.backend,
                            self.manifest,
                            &CandidateSource {
                                workdir: &dir,
                                code: &w.code,
                                command: &cmd,
                            },
                            &self.config.thresholds,
                            self.config.profile_mode,
                        )
                    }
                };
                (w.code, outcome)
            }
        };

        let score = Score::from_outcome(&outcome, self.manifest);
        state.candidates.push(CandidateSummary {
            round,
            debug,
            valid: score.valid,
            score: score.valid.then_some(score.p),
            failure: (!score.valid)
                .then(|| first_line(&outcome.failure_log))
                .flatten(),
        });
        self.persist(
            &dir,
            scheme,
            &code,
            command.as_deref(),
            &outcome,
            &score,
            &state.exchanges[first_exchange..],
        )?;
        Ok(Attempt {
            code,
            command,
            outcome,
            score,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn persist(
        &self,
        dir: &Path,
        scheme: &str,
        code: &str,
        command: Option<&str>,
        outcome: &Outcome,
        score: &Score,
        exchanges: &[ChatExchange],
    ) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| self.io_err(dir, e))?;
        let files: Vec<(&str, String)> = vec![
            ("scheme.txt", scheme.to_string()),
            ("code.cu", code.to_string()),
            ("command.txt", command.unwrap_or_default().to_string()),
            ("stdout.txt", outcome.stdout.clone()),
            (
                "profile.json",
                to_json(&PersistedProfile {
                    filtered: &outcome.filtered_profiles,
                    raw: &outcome.raw_profiles,
                }),
            ),
            (
                "outcome.json",
                to_json(&PersistedOutcome { outcome, score }),
            ),
            ("exchanges.json", to_json(exchanges)),
        ];
        for (name, content) in files {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| self.io_err(&path, e))?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("persisted records serialize")
}
