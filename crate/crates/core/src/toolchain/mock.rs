//! Deterministic stand-in for the CUDA toolchain.
//!
//! Behavior is steered by `@mock` directives in comments of the candidate
//! file (the last source handed to `compile`):
//!
//! ```text
//! // @mock speedup=1.5             every size reports 1.5
//! // @mock speedups=1.2,1.4,2.0    per size, last value repeats
//! // @mock compile_fail | cuda_error | crash | timeout | malformed
//! // @mock mismatch=1              size index 1 fails the comparison
//! // @mock compute=45 dram=10 mem=12
//! ```
//!
//! Without directives a candidate compiles, runs at speedup 1.0 and gets
//! profile metrics derived from a hash of its code, the size label and the
//! backend seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    harness::{render_blocks, SizeResult},
    Backend, CompileResult, RunResult, ToolchainError, EXIT_CUDA_ERROR, EXIT_MISMATCH,
};
use crate::agents::CompileCommand;
use crate::profile::Catalog;
use crate::task::TaskManifest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockDirectives {
    pub compile_fail: bool,
    pub cuda_error: bool,
    pub crash: bool,
    pub timeout: bool,
    pub malformed: bool,
    pub mismatch: Option<usize>,
    pub speedups: Vec<f64>,
    pub compute: Option<f64>,
    pub dram: Option<f64>,
    pub mem: Option<f64>,
}

impl MockDirectives {
    pub fn parse(code: &str) -> Self {
        let mut d = MockDirectives::default();
        for line in code.lines() {
            let Some(pos) = line.find("@mock") else {
                continue;
            };
            for token in line[pos + 5..].split_whitespace() {
                let (key, value) = token.split_once('=').unwrap_or((token, ""));
                let num = || value.parse::<f64>().ok();
                match key {
                    "compile_ok" => {}
                    "compile_fail" => d.compile_fail = true,
                    "cuda_error" => d.cuda_error = true,
                    "crash" => d.crash = true,
                    "timeout" => d.timeout = true,
                    "malformed" => d.malformed = true,
                    "mismatch" => d.mismatch = value.parse().ok(),
                    "speedup" => d.speedups = num().into_iter().collect(),
                    "speedups" => {
                        d.speedups = value.split(',').filter_map(|v| v.parse().ok()).collect()
                    }
                    "compute" => d.compute = num(),
                    "dram" => d.dram = num(),
                    "mem" => d.mem = num(),
                    "*/" => {}
                    other => tracing::warn!("ignoring unknown mock directive {other:?}"),
                }
            }
        }
        d
    }

    fn speedup(&self, idx: usize) -> f64 {
        self.speedups
            .get(idx)
            .or(self.speedups.last())
            .copied()
            .unwrap_or(1.0)
    }
}

/// Contents of a mock "binary".
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MockBinary {
    mock_binary: u32,
    digest: String,
    kernel: Option<String>,
    directives: MockDirectives,
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend { seed }
    }

    fn load(&self, binary: &Path) -> Result<MockBinary, ToolchainError> {
        let text =
            fs::read_to_string(binary).map_err(|e| ToolchainError::io(binary.display(), e))?;
        serde_json::from_str(&text).map_err(|e| {
            ToolchainError::Io(format!("{} is not a mock binary: {e}", binary.display()))
        })
    }

    /// Uniform values in [0, 1) drawn from the hash of the inputs.
    fn unit_values(&self, digest: &str, size_label: &str) -> [f64; 8] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(digest.as_bytes());
        h.update([0]);
        h.update(size_label.as_bytes());
        let bytes = h.finalize();
        let mut out = [0.0; 8];
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            let v = u32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            out[i] = v as f64 / (u32::MAX as f64 + 1.0);
        }
        out
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn pct(v: f64) -> f64 {
    round2(v.clamp(0.0, 100.0))
}

fn first_kernel_name(code: &str) -> Option<String> {
    let pos = code.find("__global__")?;
    let rest = &code[pos..code[pos..].find('(').map(|p| pos + p)?];
    rest.rsplit(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .find(|s| !s.is_empty())
        .map(str::to_string)
}

/// Formats with thousands separators the way the profiler does.
fn with_separators(v: f64) -> String {
    let s = format!("{v:.2}");
    let (int, frac) = s.split_once('.').expect("two decimals");
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    format!("{grouped}.{frac}")
}

/// Derives every catalog metric from the three classification throughputs
/// and an occupancy draw.
fn synth_metric(
    key: &str,
    compute: f64,
    dram: f64,
    mem: f64,
    occupancy: f64,
    duration: f64,
) -> f64 {
    let active = occupancy * 0.12;
    let issued = (compute / 100.0).max(0.01);
    match key {
        "compute_sm_throughput" => compute,
        "dram_throughput" => dram,
        "memory_throughput" => mem,
        "duration" => duration,
        "issue_slots_busy" => pct(0.9 * compute + 5.0),
        "sm_busy" => pct(0.95 * compute + 3.0),
        "executed_ipc_active" => round2(compute / 25.0),
        "executed_ipc_elapsed" => round2(compute / 28.0),
        "issued_ipc_active" => round2(compute / 24.5),
        "l1tex_cache_throughput" => pct(0.8 * mem + 4.0),
        "l1tex_hit_rate" => pct(100.0 - 0.7 * mem),
        "l2_cache_throughput" => pct(0.85 * mem + 2.0),
        "l2_hit_rate" => pct(95.0 - 0.6 * dram),
        "max_bandwidth" => pct(0.98 * dram.max(mem)),
        "mem_busy" => pct(0.9 * mem + 1.0),
        "mem_pipes_busy" => pct(0.7 * compute + 0.2 * mem),
        "achieved_occupancy" => occupancy,
        "achieved_active_warps_per_sm" => round2(occupancy * 0.48),
        "active_warps_per_scheduler" => round2(active),
        "eligible_warps_per_scheduler" => round2(active * compute / 100.0),
        "issued_warp_per_scheduler" => round2(issued),
        "one_or_more_eligible" => compute,
        "no_eligible" => pct(100.0 - compute),
        "warp_cycles_per_issued_instruction" => round2(active / issued),
        "warp_cycles_per_executed_instruction" => round2(1.02 * active / issued),
        _ => 0.0,
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn compile(
        &self,
        _workdir: &Path,
        sources: &[PathBuf],
        command: &CompileCommand,
    ) -> Result<CompileResult, ToolchainError> {
        let mut contents = Vec::with_capacity(sources.len());
        for src in sources {
            contents
                .push(fs::read_to_string(src).map_err(|e| ToolchainError::io(src.display(), e))?);
        }
        let candidate = contents.last().map(String::as_str).unwrap_or_default();
        let directives = MockDirectives::parse(candidate);
        if directives.compile_fail {
            let file = sources
                .last()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            return Ok(CompileResult {
                success: false,
                binary_path: None,
                stderr_excerpt: format!("{file}(1): error: identifier \"tile\" is undefined\n1 error detected in the compilation of \"{file}\".\n"),
                elapsed_ms: 0,
            });
        }

        let mut h = Sha256::new();
        for c in &contents {
            h.update(c.as_bytes());
            h.update([0]);
        }
        let digest: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        let binary = PathBuf::from(command.output().unwrap_or("a.out"));
        let image = MockBinary {
            mock_binary: 1,
            digest,
            kernel: first_kernel_name(candidate),
            directives,
        };
        let json = serde_json::to_string_pretty(&image).expect("mock binary serializes");
        fs::write(&binary, json).map_err(|e| ToolchainError::io(binary.display(), e))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&binary, fs::Permissions::from_mode(0o755))
                .map_err(|e| ToolchainError::io(binary.display(), e))?;
        }
        Ok(CompileResult {
            success: true,
            binary_path: Some(binary),
            stderr_excerpt: String::new(),
            elapsed_ms: 0,
        })
    }

    fn execute(&self, binary: &Path, manifest: &TaskManifest) -> Result<RunResult, ToolchainError> {
        let image = self.load(binary)?;
        let d = &image.directives;
        if d.timeout {
            return Ok(RunResult::from_process(
                None,
                String::new(),
                "",
                true,
                String::new,
            ));
        }
        if d.crash {
            return Ok(RunResult::from_process(
                Some(134),
                String::new(),
                "terminate called after throwing an instance of 'std::bad_alloc'\n",
                false,
                String::new,
            ));
        }

        let stop = d.mismatch.filter(|&k| k < manifest.sizes.len());
        let passed = stop.unwrap_or(manifest.sizes.len());
        let results: Vec<SizeResult> = manifest.sizes[..passed]
            .iter()
            .enumerate()
            .map(|(i, s)| SizeResult {
                size_label: s.label.clone(),
                complexity: s.complexity,
                speedup: d.speedup(i),
            })
            .collect();
        let mut stdout = render_blocks(&results);

        if d.cuda_error {
            let kernel = image
                .kernel
                .clone()
                .unwrap_or_else(|| format!("{}_kernel", manifest.wrapper_name));
            let memcheck = move || {
                format!(
                    "========= COMPUTE-SANITIZER\n\
                     ========= Invalid __global__ write of size 4 bytes\n\
                     =========     at {kernel}+0x1c0\n\
                     =========     by thread (31,0,0) in block (7,0,0)\n\
                     =========     Address 0x7f3a00001000 is out of bounds\n\
                     ========= ERROR SUMMARY: 1 error\n"
                )
            };
            return Ok(RunResult::from_process(
                Some(EXIT_CUDA_ERROR),
                stdout,
                "CUDA error: an illegal memory access was encountered\n",
                false,
                memcheck,
            ));
        }
        if let Some(k) = stop {
            let u = self.unit_values(&image.digest, &manifest.sizes[k].label);
            let expected = [round2(u[0] * 2.0 - 1.0), round2(u[1] * 2.0 - 1.0)];
            let actual = [expected[0] + 0.5, expected[1] - 0.25];
            let detail = serde_json::json!({
                "status": "mismatch",
                "mismatches": {
                    "test_case_size": manifest.sizes[k].label,
                    "first_index": (u[2] * 1000.0) as u64,
                    "expected": expected,
                    "actual": actual,
                    "tolerance": manifest.tolerance,
                }
            });
            stdout.push_str(&detail.to_string());
            stdout.push('\n');
            return Ok(RunResult::from_process(
                Some(EXIT_MISMATCH),
                stdout,
                "",
                false,
                String::new,
            ));
        }
        if d.malformed {
            stdout.push_str("Test case size: truncated\n");
        }
        Ok(RunResult::from_process(
            Some(0),
            stdout,
            "",
            false,
            String::new,
        ))
    }

    fn profile(
        &self,
        binary: &Path,
        manifest: &TaskManifest,
        size_index: usize,
    ) -> Result<String, ToolchainError> {
        let image = self.load(binary)?;
        let size = manifest
            .sizes
            .get(size_index)
            .ok_or_else(|| ToolchainError::Io(format!("size index {size_index} out of range")))?;
        let u = self.unit_values(&image.digest, &size.label);
        let d = &image.directives;
        let draw = |i: usize| round2(5.0 + 90.0 * u[i]);
        let compute = d.compute.unwrap_or_else(|| draw(0));
        let dram = d.dram.unwrap_or_else(|| draw(1));
        let mem = d.mem.unwrap_or_else(|| draw(2));
        let occupancy = round2(20.0 + 75.0 * u[3]);
        let duration = round2((1000.0 + size.complexity as f64 / 50.0) / d.speedup(size_index));

        let kernel = image
            .kernel
            .clone()
            .unwrap_or_else(|| format!("{}_kernel", manifest.wrapper_name));
        let catalog = Catalog::builtin();
        let mut out = String::from("==PROF== Connected to process 4242 (candidate_bin)\n");
        out.push_str("\"ID\",\"Kernel Name\",\"Section Name\",\"Metric Name\",\"Metric Unit\",\"Metric Value\"\n");
        let launches = [
            (0, "fill_inputs", 50.0, 20.0, 60.0, duration / 20.0),
            (1, kernel.as_str(), compute, dram, mem, duration),
        ];
        for (id, name, c, dr, m, dur) in launches {
            for spec in catalog.metrics() {
                let value = synth_metric(spec.key.as_str(), c, dr, m, occupancy, round2(dur));
                let section = catalog.section_display(spec.section);
                out.push_str(&format!(
                    "\"{id}\",\"{name}\",\"{section}\",\"{}\",\"{}\",\"{}\"\n",
                    spec.display,
                    spec.unit,
                    with_separators(value)
                ));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{parse_profiler_export, select_dominant};

    #[test]
    fn directive_parsing() {
        let d =
            MockDirectives::parse("// @mock speedups=1.2,1.4 mismatch=1\n/* @mock compute=45 */");
        assert_eq!(d.speedups, vec![1.2, 1.4]);
        assert_eq!(d.mismatch, Some(1));
        assert_eq!(d.compute, Some(45.0));
        assert_eq!(d.speedup(5), 1.4);
        assert_eq!(MockDirectives::parse("").speedup(0), 1.0);
    }

    #[test]
    fn every_catalog_metric_is_synthesized() {
        for spec in Catalog::builtin().metrics() {
            let v = synth_metric(spec.key.as_str(), 40.0, 40.0, 40.0, 50.0, 1000.0);
            assert!(v > 0.0, "{}", spec.key.as_str());
        }
    }

    #[test]
    fn separators() {
        assert_eq!(with_separators(1234567.891), "1,234,567.89");
        assert_eq!(with_separators(12.5), "12.50");
        assert_eq!(with_separators(123.0), "123.00");
    }

    #[test]
    fn kernel_name_from_code() {
        assert_eq!(
            first_kernel_name("__global__ void dot_kernel_optimized(float* a) {}").as_deref(),
            Some("dot_kernel_optimized")
        );
        assert_eq!(first_kernel_name("int main() {}"), None);
    }

    #[test]
    fn export_parses_and_dominant_is_main_kernel() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("c.cu");
        fs::write(&src, "__global__ void k_kernel_optimized() {}\n").unwrap();
        let bin = dir.path().join("bin");
        let cmd = CompileCommand::parse(&format!("nvcc c.cu -o {}", bin.display())).unwrap();
        let backend = MockBackend::new(7);
        assert!(backend.compile(dir.path(), &[src], &cmd).unwrap().success);
        let manifest = crate::toolchain::tests::manifest("fp32", "rms_norm.cu");
        let text = backend.profile(&bin, &manifest, 0).unwrap();
        assert_eq!(text, backend.profile(&bin, &manifest, 0).unwrap());
        let reports = parse_profiler_export(&text).unwrap();
        assert_eq!(reports.len(), 2);
        let top = select_dominant(reports).unwrap();
        assert_eq!(top.kernel_name, "k_kernel_optimized");
        assert_eq!(top.metrics.len(), Catalog::builtin().metrics().len());
    }
}
