//! Compiling, running and profiling candidates.
//!
//! A candidate is one source file that the task harness includes as its
//! optimized entry point. Each candidate gets its own working directory
//! holding copies of the harness and baseline sources plus the candidate
//! file, so generated binaries never touch the task directory.

mod cuda;
mod harness;
mod mock;
pub mod process;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::CompileCommand;
use crate::profile::{
    classify, filter_metrics, parse_profiler_export, select_dominant, FilteredProfile, ProfileMode,
    ProfileReport, ThresholdSet,
};
use crate::task::{Precision, TaskManifest};

pub use cuda::{CudaBackend, CudaConfig};
pub use harness::{find_mismatch_object, parse_blocks, render_blocks, SizeResult, BLOCK_SEPARATOR};
pub use mock::{MockBackend, MockDirectives};

/// Name of the binary produced inside a candidate's working directory.
pub const CANDIDATE_BINARY: &str = "candidate_bin";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolchainError {
    #[error("compiler `{0}` not found on PATH")]
    CompilerNotFound(String),
    #[error("profiler `{0}` not found on PATH")]
    ProfilerNotFound(String),
    #[error("{stage} exceeded its {secs} s timeout")]
    TimeoutExceeded { stage: &'static str, secs: u64 },
    #[error("unparseable harness output at line {line}: {text}")]
    UnparseableOutput { line: usize, text: String },
    #[error("{0}")]
    Io(String),
}

impl ToolchainError {
    pub(crate) fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        ToolchainError::Io(format!("{context}: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub success: bool,
    pub binary_path: Option<PathBuf>,
    pub stderr_excerpt: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum RunFailure {
    /// The harness's structured mismatch object.
    Mismatch(String),
    /// Memory-checker log from the re-run.
    CudaError(String),
    Timeout,
    Crash(String),
    Malformed {
        line: usize,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub size_results: Vec<SizeResult>,
    pub failure: Option<RunFailure>,
}

/// Harness exit status for an output mismatch.
pub const EXIT_MISMATCH: i32 = 2;
/// Harness exit status for a CUDA runtime fault.
pub const EXIT_CUDA_ERROR: i32 = 3;

impl RunResult {
    /// Interprets a finished harness process. `memcheck` is called only for
    /// CUDA faults.
    pub fn from_process(
        exit_code: Option<i32>,
        stdout: String,
        stderr: &str,
        timed_out: bool,
        memcheck: impl FnOnce() -> String,
    ) -> Self {
        let parsed = parse_blocks(&stdout);
        let size_results = parsed.as_ref().cloned().unwrap_or_default();
        let failure = match exit_code {
            _ if timed_out => Some(RunFailure::Timeout),
            Some(0) => match parsed {
                Ok(_) => None,
                Err(ToolchainError::UnparseableOutput { line, text }) => {
                    Some(RunFailure::Malformed { line, text })
                }
                Err(e) => Some(RunFailure::Crash(e.to_string())),
            },
            Some(EXIT_MISMATCH) => {
                Some(RunFailure::Mismatch(match find_mismatch_object(&stdout) {
                    Some(v) => v.to_string(),
                    None => process::tail(&stdout, process::STDERR_TAIL_BYTES).to_string(),
                }))
            }
            Some(EXIT_CUDA_ERROR) => Some(RunFailure::CudaError(memcheck())),
            Some(code) => Some(RunFailure::Crash(format!(
                "exit code {code}\n{}",
                process::tail(stderr, process::STDERR_TAIL_BYTES)
            ))),
            None => Some(RunFailure::Crash(format!(
                "terminated by signal\n{}",
                process::tail(stderr, process::STDERR_TAIL_BYTES)
            ))),
        };
        RunResult {
            exit_code,
            stdout,
            size_results,
            failure,
        }
    }
}

/// Compiles, runs and profiles candidates.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs `command` in `workdir`. `sources` are the files the command reads.
    fn compile(
        &self,
        workdir: &Path,
        sources: &[PathBuf],
        command: &CompileCommand,
    ) -> Result<CompileResult, ToolchainError>;

    /// Runs the harness over all sizes.
    fn execute(&self, binary: &Path, manifest: &TaskManifest) -> Result<RunResult, ToolchainError>;

    /// Profiles the harness restricted to one size; returns the raw export.
    fn profile(
        &self,
        binary: &Path,
        manifest: &TaskManifest,
        size_index: usize,
    ) -> Result<String, ToolchainError>;
}

/// Everything learned from evaluating one program.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub compiled: bool,
    pub ran: bool,
    pub correct: bool,
    pub size_results: Vec<SizeResult>,
    pub filtered_profiles: Vec<FilteredProfile>,
    pub raw_profiles: Vec<ProfileReport>,
    pub failure_log: String,
    /// Raw harness stdout.
    #[serde(default)]
    pub stdout: String,
    /// Profiling problems that did not affect correctness.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile_notes: Vec<String>,
}

impl Outcome {
    pub fn failed(failure_log: impl Into<String>) -> Self {
        Outcome {
            failure_log: failure_log.into(),
            ..Default::default()
        }
    }
}

/// File name the harness includes for the optimized entry point, e.g.
/// `rms_norm_optimized_bf16.cu`.
pub fn candidate_file_name(manifest: &TaskManifest) -> String {
    let stem = manifest
        .baseline_source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest.wrapper_name.clone());
    let ext = manifest
        .baseline_source
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cu".into());
    match manifest.precision {
        Precision::Bf16 => {
            let base = stem.strip_suffix("_bf16").unwrap_or(&stem);
            format!("{base}_optimized_bf16.{ext}")
        }
        Precision::Fp32 => format!("{stem}_optimized.{ext}"),
    }
}

/// Symbol the candidate must export.
pub fn optimized_wrapper_name(manifest: &TaskManifest) -> String {
    format!("{}_optimized", manifest.wrapper_name)
}

/// Candidate used to measure the baseline itself: the optimized entry point
/// forwards to the baseline wrapper.
pub fn baseline_shim(manifest: &TaskManifest) -> String {
    let params = manifest.wrapper_signature.join(", ");
    let args: Vec<&str> = manifest
        .wrapper_signature
        .iter()
        .filter_map(|p| {
            let p = p.split('[').next().unwrap_or(p);
            p.rsplit(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .find(|s| !s.is_empty())
        })
        .collect();
    format!(
        "extern \"C\" void {}({params}) {{\n    {}({});\n}}\n",
        optimized_wrapper_name(manifest),
        manifest.wrapper_name,
        args.join(", ")
    )
}

/// One program to evaluate.
#[derive(Debug, Clone)]
pub struct CandidateSource<'a> {
    pub workdir: &'a Path,
    pub code: &'a str,
    pub command: &'a CompileCommand,
}

fn prepare_workdir(
    manifest: &TaskManifest,
    c: &CandidateSource<'_>,
) -> Result<Vec<PathBuf>, ToolchainError> {
    fs::create_dir_all(c.workdir).map_err(|e| ToolchainError::io(c.workdir.display(), e))?;
    let mut sources = Vec::new();
    for src in [
        manifest.harness_source_path(),
        manifest.baseline_source_path(),
    ] {
        let name = src
            .file_name()
            .ok_or_else(|| ToolchainError::Io(format!("bad source path {}", src.display())))?;
        let dst = c.workdir.join(name);
        fs::copy(&src, &dst).map_err(|e| ToolchainError::io(src.display(), e))?;
        sources.push(dst);
    }
    let dst = c.workdir.join(candidate_file_name(manifest));
    fs::write(&dst, c.code).map_err(|e| ToolchainError::io(dst.display(), e))?;
    sources.push(dst);
    Ok(sources)
}

fn describe_failure(f: &RunFailure) -> String {
    match f {
        RunFailure::Mismatch(detail) => format!("Execution result error:\n{detail}"),
        RunFailure::CudaError(log) => format!("CUDA error, memcheck log:\n{log}"),
        RunFailure::Timeout => "Execution timed out".to_string(),
        RunFailure::Crash(detail) => format!("Execution crashed: {detail}"),
        RunFailure::Malformed { line, text } => {
            format!("Unparseable harness output at line {line}: {text}")
        }
    }
}

/// Checks reported sizes against the manifest schedule, in order.
fn size_coverage_error(manifest: &TaskManifest, results: &[SizeResult]) -> Option<String> {
    if results.len() != manifest.sizes.len() {
        return Some(format!(
            "harness reported {} of {} test sizes",
            results.len(),
            manifest.sizes.len()
        ));
    }
    results.iter().zip(&manifest.sizes).find_map(|(r, s)| {
        (r.size_label != s.label || r.complexity != s.complexity).then(|| {
            format!(
                "harness reported size {:?} (complexity {}) where the manifest declares {:?} (complexity {})",
                r.size_label, r.complexity, s.label, s.complexity
            )
        })
    })
}

/// Compile, run, and (for correct programs) profile, classify and filter.
/// Every failure ends up in the returned outcome.
pub fn execute_and_filter(
    backend: &dyn Backend,
    manifest: &TaskManifest,
    candidate: &CandidateSource<'_>,
    thresholds: &ThresholdSet,
    mode: ProfileMode,
) -> Outcome {
    let sources = match prepare_workdir(manifest, candidate) {
        Ok(s) => s,
        Err(e) => return Outcome::failed(format!("Could not prepare candidate: {e}")),
    };
    let binary = candidate.workdir.join(CANDIDATE_BINARY);
    let command = candidate
        .command
        .clone()
        .with_output(&binary.to_string_lossy());

    let compiled = match backend.compile(candidate.workdir, &sources, &command) {
        Ok(r) if r.success => r,
        Ok(r) => return Outcome::failed(format!("Compilation error:\n{}", r.stderr_excerpt)),
        Err(e) => return Outcome::failed(format!("Compilation error: {e}")),
    };
    let binary = compiled.binary_path.unwrap_or(binary);

    let mut outcome = Outcome {
        compiled: true,
        ..Default::default()
    };
    let run = match backend.execute(&binary, manifest) {
        Ok(r) => r,
        Err(e) => {
            outcome.failure_log = format!("Execution error: {e}");
            return outcome;
        }
    };
    outcome.ran = !matches!(run.failure, Some(RunFailure::Timeout));
    outcome.stdout = run.stdout;
    if let Some(f) = &run.failure {
        outcome.failure_log = describe_failure(f);
        return outcome;
    }
    if let Some(msg) = size_coverage_error(manifest, &run.size_results) {
        outcome.failure_log = msg;
        return outcome;
    }
    outcome.correct = true;
    outcome.size_results = run.size_results;

    if mode == ProfileMode::Disabled {
        return outcome;
    }
    for (idx, size) in manifest.sizes.iter().enumerate() {
        let report = backend
            .profile(&binary, manifest, idx)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_profiler_export(&text).map_err(|e| e.to_string()))
            .and_then(|reports| {
                select_dominant(reports).ok_or_else(|| "no kernel launches".to_string())
            });
        match report {
            Ok(mut report) => {
                report.size_label = size.label.clone();
                let class = classify(&report, thresholds);
                outcome
                    .filtered_profiles
                    .push(filter_metrics(&report, class));
                outcome.raw_profiles.push(report);
            }
            Err(e) => {
                tracing::warn!(task = %manifest.name, size = %size.label, "profiling failed: {e}");
                outcome.profile_notes.push(format!("{}: {e}", size.label));
            }
        }
    }
    outcome
}
