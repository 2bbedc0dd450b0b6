//! Real toolchain: nvcc, the harness binary, Nsight Compute and
//! compute-sanitizer, all run as argv without a shell.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::process::{self, STDERR_TAIL_BYTES};
use super::{Backend, CompileResult, RunResult, ToolchainError};
use crate::agents::CompileCommand;
use crate::task::TaskManifest;

/// Serializes all GPU work in this process.
static GPU_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CudaConfig {
    pub compiler: String,
    pub profiler: String,
    pub memcheck: String,
    pub compile_timeout_secs: u64,
    pub run_timeout_secs: u64,
    pub profile_timeout_secs: u64,
    pub profiler_sections: Vec<String>,
}

impl Default for CudaConfig {
    fn default() -> Self {
        CudaConfig {
            compiler: "nvcc".into(),
            profiler: "ncu".into(),
            memcheck: "compute-sanitizer".into(),
            compile_timeout_secs: 120,
            run_timeout_secs: 300,
            profile_timeout_secs: 600,
            profiler_sections: [
                "SpeedOfLight",
                "ComputeWorkloadAnalysis",
                "MemoryWorkloadAnalysis",
                "Occupancy",
                "SchedulerStats",
                "WarpStateStats",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CudaBackend {
    config: CudaConfig,
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    GPU_LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

impl CudaBackend {
    pub fn new(config: CudaConfig) -> Self {
        CudaBackend { config }
    }

    pub fn config(&self) -> &CudaConfig {
        &self.config
    }

    /// Checks that the compiler and profiler can be found.
    pub fn check_tools(&self) -> Result<(), ToolchainError> {
        self.compiler()?;
        self.profiler()?;
        Ok(())
    }

    fn compiler(&self) -> Result<PathBuf, ToolchainError> {
        which::which(&self.config.compiler)
            .map_err(|_| ToolchainError::CompilerNotFound(self.config.compiler.clone()))
    }

    fn profiler(&self) -> Result<PathBuf, ToolchainError> {
        which::which(&self.config.profiler)
            .map_err(|_| ToolchainError::ProfilerNotFound(self.config.profiler.clone()))
    }

    /// Profiler arguments for one size of the harness.
    pub fn profiler_args(&self, binary: &Path, size_index: usize) -> Vec<String> {
        let mut args = vec!["--csv".to_string(), "--page".into(), "details".into()];
        for s in &self.config.profiler_sections {
            args.push("--section".into());
            args.push(s.clone());
        }
        args.push(binary.to_string_lossy().into_owned());
        args.push(size_index.to_string());
        args
    }

    fn memcheck_log(&self, binary: &Path, cwd: &Path) -> String {
        let Ok(tool) = which::which(&self.config.memcheck) else {
            return format!(
                "{} not found; no memcheck log available",
                self.config.memcheck
            );
        };
        let args = vec![
            "--tool".to_string(),
            "memcheck".into(),
            binary.to_string_lossy().into_owned(),
        ];
        match process::run(
            &tool,
            &args,
            cwd,
            Duration::from_secs(self.config.run_timeout_secs),
        ) {
            Ok(out) => process::tail(&format!("{}{}", out.stdout, out.stderr), STDERR_TAIL_BYTES)
                .to_string(),
            Err(e) => format!("memcheck failed to start: {e}"),
        }
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

impl Backend for CudaBackend {
    fn name(&self) -> &'static str {
        "cuda"
    }

    fn compile(
        &self,
        workdir: &Path,
        sources: &[PathBuf],
        command: &CompileCommand,
    ) -> Result<CompileResult, ToolchainError> {
        for src in sources {
            if !src.exists() {
                return Err(ToolchainError::Io(format!(
                    "missing source {}",
                    src.display()
                )));
            }
        }
        let compiler = self.compiler()?;
        let _gpu = lock();
        let start = Instant::now();
        let out = process::run(
            &compiler,
            &command.argv()[1..],
            workdir,
            Duration::from_secs(self.config.compile_timeout_secs),
        )
        .map_err(|e| ToolchainError::io("nvcc", e))?;
        if out.timed_out {
            return Err(ToolchainError::TimeoutExceeded {
                stage: "compile",
                secs: self.config.compile_timeout_secs,
            });
        }
        let binary = command.output().map(|o| workdir.join(o));
        let success = out.exit_code == Some(0) && binary.as_ref().is_some_and(|b| b.exists());
        Ok(CompileResult {
            success,
            binary_path: binary.filter(|_| success),
            stderr_excerpt: process::tail(&out.stderr, STDERR_TAIL_BYTES).to_string(),
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn execute(
        &self,
        binary: &Path,
        _manifest: &TaskManifest,
    ) -> Result<RunResult, ToolchainError> {
        let cwd = parent_dir(binary);
        let _gpu = lock();
        let out = process::run(
            binary,
            &[],
            cwd,
            Duration::from_secs(self.config.run_timeout_secs),
        )
        .map_err(|e| ToolchainError::io(binary.display(), e))?;
        Ok(RunResult::from_process(
            out.exit_code,
            out.stdout,
            &out.stderr,
            out.timed_out,
            || self.memcheck_log(binary, cwd),
        ))
    }

    fn profile(
        &self,
        binary: &Path,
        _manifest: &TaskManifest,
        size_index: usize,
    ) -> Result<String, ToolchainError> {
        let profiler = self.profiler()?;
        let cwd = parent_dir(binary);
        let _gpu = lock();
        let out = process::run(
            &profiler,
            &self.profiler_args(binary, size_index),
            cwd,
            Duration::from_secs(self.config.profile_timeout_secs),
        )
        .map_err(|e| ToolchainError::io("profiler", e))?;
        if out.timed_out {
            return Err(ToolchainError::TimeoutExceeded {
                stage: "profile",
                secs: self.config.profile_timeout_secs,
            });
        }
        if out.exit_code != Some(0) {
            return Err(ToolchainError::Io(format!(
                "profiler exited with {:?}: {}",
                out.exit_code,
                process::tail(&out.stderr, 2048)
            )));
        }
        Ok(out.stdout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_tools_are_reported() {
        let backend = CudaBackend::new(CudaConfig {
            compiler: "kernelpilot-no-such-nvcc".into(),
            profiler: "kernelpilot-no-such-ncu".into(),
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let cmd = CompileCommand::parse("nvcc a.cu -o a").unwrap();
        assert_eq!(
            backend.compile(dir.path(), &[], &cmd),
            Err(ToolchainError::CompilerNotFound(
                "kernelpilot-no-such-nvcc".into()
            ))
        );
        let manifest = crate::toolchain::tests::manifest("fp32", "rms_norm.cu");
        assert_eq!(
            backend.profile(Path::new("/bin/true"), &manifest, 0),
            Err(ToolchainError::ProfilerNotFound(
                "kernelpilot-no-such-ncu".into()
            ))
        );
    }

    #[test]
    fn profiler_arguments_select_size() {
        let args = CudaBackend::default().profiler_args(Path::new("/w/candidate_bin"), 2);
        assert_eq!(&args[..3], ["--csv", "--page", "details"]);
        assert_eq!(
            args[args.len() - 2..],
            ["/w/candidate_bin".to_string(), "2".to_string()]
        );
        assert_eq!(args.iter().filter(|a| *a == "--section").count(), 6);
    }
}
