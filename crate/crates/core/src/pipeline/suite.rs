use std::path::Path;

use super::{Pipeline, PipelineConfig, RunState};
use crate::agents::{Agents, CompileCommand};
use crate::parallel::{self, Parallelism};
use crate::profile::{ProfileMode, ProfileReport, ThresholdSet};
use crate::task::TaskManifest;
use crate::toolchain::{baseline_shim, execute_and_filter, Backend, CandidateSource};

#[derive(Debug)]
pub struct TaskRun {
    pub manifest: TaskManifest,
    pub result: Result<RunState, String>,
}

#[derive(Debug, Default)]
pub struct SuiteRun {
    /// Ordered by task name.
    pub tasks: Vec<TaskRun>,
}

/// Runs every task with at most `workers` pipelines in flight. A failing task
/// is recorded and does not stop the others.
pub fn run_suite(
    manifests: &[TaskManifest],
    config: &PipelineConfig,
    backend: &dyn Backend,
    agents_for: &(dyn Fn(&TaskManifest) -> Agents + Sync),
    run_root: &Path,
    workers: usize,
    resume: bool,
) -> SuiteRun {
    let mut ordered: Vec<&TaskManifest> = manifests.iter().collect();
    ordered.sort_by(|a, b| a.name.cmp(&b.name));

    let tasks = parallel::map(&ordered, Parallelism::workers(workers), |m| {
        let agents = agents_for(m);
        let pipeline = Pipeline::new(m, config, &agents, backend, run_root.join(&m.name));
        let result = pipeline.run(resume).map_err(|e| {
            tracing::error!(task = %m.name, "task failed: {e}");
            e.to_string()
        });
        TaskRun {
            manifest: (*m).clone(),
            result,
        }
    });
    SuiteRun { tasks }
}

/// Profiles every baseline and returns the dominant kernel at its heaviest
/// size, in the order given.
pub fn profile_baselines(
    manifests: &[TaskManifest],
    backend: &dyn Backend,
    scratch: &Path,
    workers: usize,
) -> Vec<(String, Result<ProfileReport, String>)> {
    parallel::map(manifests, Parallelism::workers(workers), |m| {
        let result = CompileCommand::parse(&m.baseline_compile_command)
            .map_err(|e| format!("baseline compile command: {e}"))
            .and_then(|command| {
                let shim = baseline_shim(m);
                let outcome = execute_and_filter(
                    backend,
                    m,
                    &CandidateSource {
                        workdir: &scratch.join(&m.name),
                        code: &shim,
                        command: &command,
                    },
                    &ThresholdSet::default(),
                    ProfileMode::Full,
                );
                if !outcome.correct {
                    return Err(outcome.failure_log);
                }
                let heaviest = &m.heaviest_size().label;
                outcome
                    .raw_profiles
                    .into_iter()
                    .find(|r| &r.size_label == heaviest)
                    .ok_or_else(|| format!("no profile for size {heaviest}"))
            });
        (m.name.clone(), result)
    })
}
