//! A small self-contained task suite plus scripted agent replies, for demos
//! and tests that run against the mock backend.

use std::fs;
use std::path::Path;

use crate::agents::{AgentRole, Script, ScriptEntry};
use crate::task::{load_manifest, TaskError, TaskManifest, MANIFEST_FILE};

/// What a scripted candidate does when evaluated by the mock backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Trial {
    Speedup(f64),
    CompileFail,
    /// Raw `@mock` directive text.
    Directive(String),
}

impl Trial {
    fn directive(&self) -> String {
        match self {
            Trial::Speedup(s) => format!("speedup={s}"),
            Trial::CompileFail => "compile_fail".into(),
            Trial::Directive(d) => d.clone(),
        }
    }
}

/// Coder reply carrying a candidate that follows the wrapper convention.
pub fn coder_reply(manifest: &TaskManifest, trial: &Trial) -> String {
    let w = &manifest.wrapper_name;
    let sig = manifest.wrapper_signature.join(", ");
    format!(
        "Here is <{w}_optimized>.\n\n```cuda\n// @mock {}\n#include <cuda_runtime.h>\n\n\
         __global__ void {w}_kernel_optimized(int n) {{\n    int i = blockIdx.x * blockDim.x + threadIdx.x;\n    if (i >= n) return;\n}}\n\n\
         extern \"C\" void {w}_optimized({sig}) {{\n    {w}_kernel_optimized<<<1, 256>>>(0);\n}}\n```\n",
        trial.directive()
    )
}

pub fn compiler_reply(manifest: &TaskManifest) -> String {
    format!("```bash\n{}\n```\n", manifest.baseline_compile_command)
}

/// Script for one task: `rounds[r][d]` is the candidate produced in round
/// `r + 1` at debug step `d`. Responses are tagged with the task name.
pub fn scripted_rounds(manifest: &TaskManifest, rounds: &[Vec<Trial>]) -> Script {
    let mut entries = Vec::new();
    let task = manifest.name.as_str();
    for (r, trials) in rounds.iter().enumerate() {
        let round = r as u32 + 1;
        entries.push(
            ScriptEntry::new(
                AgentRole::Planner,
                format!("Scheme {round}: tile the main loop and stage operands in shared memory."),
            )
            .at(round, 0)
            .for_task(task),
        );
        for (d, trial) in trials.iter().enumerate() {
            let debug = d as u32;
            if debug > 0 {
                entries.push(
                    ScriptEntry::new(
                        AgentRole::Debugger,
                        format!("Fix {debug}: correct the launch bounds."),
                    )
                    .at(round, debug)
                    .for_task(task),
                );
            }
            entries.push(
                ScriptEntry::new(AgentRole::Coder, coder_reply(manifest, trial))
                    .at(round, debug)
                    .for_task(task),
            );
            entries.push(
                ScriptEntry::new(AgentRole::Compiler, compiler_reply(manifest))
                    .at(round, debug)
                    .for_task(task),
            );
        }
    }
    Script { entries }
}

struct SampleTask {
    name: &'static str,
    category: &'static str,
    precision: &'static str,
    signature: &'static [&'static str],
    description: &'static str,
    sizes: &'static [(&'static str, u64)],
    baseline_body: &'static str,
}

const SAMPLE_TASKS: &[SampleTask] = &[
    SampleTask {
        name: "conv2d",
        category: "dense",
        precision: "fp32",
        signature: &["const float* input", "const float* weight", "float* output", "int H", "int W", "int K"],
        description: "Single-channel 2D convolution without padding: output[y][x] = sum over k of input[y+ky][x+kx] * weight[ky][kx].",
        sizes: &[("H: 64, W: 64, K: 3", 74_892), ("H: 512, W: 512, K: 5", 12_902_450), ("H: 2048, W: 2048, K: 7", 410_016_578)],
        baseline_body: "    int oh = H - K + 1, ow = W - K + 1;\n    int i = blockIdx.x * blockDim.x + threadIdx.x;\n    if (i >= oh * ow) return;\n    int y = i / ow, x = i % ow;\n    float acc = 0.0f;\n    for (int ky = 0; ky < K; ++ky)\n        for (int kx = 0; kx < K; ++kx)\n            acc += input[(y + ky) * W + x + kx] * weight[ky * K + kx];\n    output[i] = acc;\n",
    },
    SampleTask {
        name: "dot_product",
        category: "numerical",
        precision: "fp32",
        signature: &["const float* a", "const float* b", "float* out", "int n"],
        description: "Dot product of two vectors of length n written to out[0].",
        sizes: &[("N: 1024", 2_048), ("N: 65536", 131_072), ("N: 4194304", 8_388_608)],
        baseline_body: "    int i = blockIdx.x * blockDim.x + threadIdx.x;\n    if (i < n) atomicAdd(out, a[i] * b[i]);\n",
    },
    SampleTask {
        name: "matrix_mul",
        category: "dense",
        precision: "fp32",
        signature: &["const float* A", "const float* B", "float* C", "int M", "int N", "int K"],
        description: "Row-major matrix multiplication C = A * B with A of shape M x K and B of shape K x N.",
        sizes: &[("M: 64, N: 64, K: 64", 524_288), ("M: 256, N: 256, K: 256", 33_554_432), ("M: 1024, N: 1024, K: 1024", 2_147_483_648)],
        baseline_body: "    int row = blockIdx.y * blockDim.y + threadIdx.y;\n    int col = blockIdx.x * blockDim.x + threadIdx.x;\n    if (row >= M || col >= N) return;\n    float acc = 0.0f;\n    for (int k = 0; k < K; ++k) acc += A[row * K + k] * B[k * N + col];\n    C[row * N + col] = acc;\n",
    },
    SampleTask {
        name: "rms_norm",
        category: "llm",
        precision: "bf16",
        signature: &["const __nv_bfloat16* x", "const __nv_bfloat16* gamma", "__nv_bfloat16* y", "int rows", "int cols"],
        description: "Row-wise RMS normalization y = x / sqrt(mean(x^2) + 1e-6) * gamma.",
        sizes: &[("R: 16, C: 256", 12_288), ("R: 256, C: 1024", 786_432), ("R: 4096, C: 4096", 50_331_648)],
        baseline_body: "    int r = blockIdx.x * blockDim.x + threadIdx.x;\n    if (r >= rows) return;\n    float ss = 0.0f;\n    for (int c = 0; c < cols; ++c) { float v = __bfloat162float(x[r * cols + c]); ss += v * v; }\n    float inv = rsqrtf(ss / cols + 1e-6f);\n    for (int c = 0; c < cols; ++c)\n        y[r * cols + c] = __float2bfloat16(__bfloat162float(x[r * cols + c]) * inv * __bfloat162float(gamma[c]));\n",
    },
    SampleTask {
        name: "spmv_csr",
        category: "sparse",
        precision: "fp32",
        signature: &["const int* row_ptr", "const int* col_idx", "const float* values", "const float* x", "float* y", "int rows"],
        description: "Sparse matrix-vector product y = A * x with A in CSR format.",
        sizes: &[("Rows: 1000, NNZ: 10000", 20_000), ("Rows: 50000, NNZ: 1000000", 2_000_000), ("Rows: 1000000, NNZ: 20000000", 40_000_000)],
        baseline_body: "    int r = blockIdx.x * blockDim.x + threadIdx.x;\n    if (r >= rows) return;\n    float acc = 0.0f;\n    for (int j = row_ptr[r]; j < row_ptr[r + 1]; ++j) acc += values[j] * x[col_idx[j]];\n    y[r] = acc;\n",
    },
];

fn arg_names(signature: &[&str]) -> Vec<String> {
    signature
        .iter()
        .map(|p| p.rsplit([' ', '*']).next().unwrap_or(p).to_string())
        .collect()
}

fn source_suffix(precision: &str) -> &'static str {
    if precision == "bf16" {
        "_bf16"
    } else {
        ""
    }
}

fn manifest_text(t: &SampleTask) -> String {
    let sfx = source_suffix(t.precision);
    let sig = t
        .signature
        .iter()
        .map(|s| format!("\"{s}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let mut text = format!(
        "name = \"{name}\"\ncategory = \"{category}\"\nprecision = \"{precision}\"\nwrapper_name = \"{name}\"\n\
         wrapper_signature = [{sig}]\nbaseline_source = \"{name}{sfx}.cu\"\nharness_source = \"harness{sfx}.cu\"\n\
         baseline_compile_command = \"nvcc -O3 -arch=sm_80 harness{sfx}.cu -o {name}_test\"\ndescription = \"{description}\"\n",
        name = t.name,
        category = t.category,
        precision = t.precision,
        description = t.description,
    );
    for (label, complexity) in t.sizes {
        text.push_str(&format!(
            "\n[[size]]\nlabel = \"{label}\"\ncomplexity = {complexity}\n"
        ));
    }
    text
}

fn baseline_text(t: &SampleTask) -> String {
    let include = if t.precision == "bf16" {
        "#include <cuda_bf16.h>\n"
    } else {
        ""
    };
    let sig = t.signature.join(", ");
    let args = arg_names(t.signature).join(", ");
    format!(
        "#include <cuda_runtime.h>\n{include}\n__global__ void {name}_kernel({sig}) {{\n{body}}}\n\n\
         extern \"C\" void {name}({sig}) {{\n    {name}_kernel<<<1024, 256>>>({args});\n    cudaDeviceSynchronize();\n}}\n",
        name = t.name,
        body = t.baseline_body,
    )
}

fn harness_text(t: &SampleTask) -> String {
    let sfx = source_suffix(t.precision);
    format!(
        "// Test harness for {name}: includes the baseline and the candidate, runs both on\n\
         // every size given on the command line (or all sizes), compares outputs and prints\n\
         // one block per size.\n#include \"{name}{sfx}.cu\"\n#include \"{name}_optimized{sfx}.cu\"\n",
        name = t.name,
    )
}

/// Writes the sample suite under `dir`, one sub-directory per task, and
/// returns the loaded manifests ordered by name.
pub fn write_sample_suite(dir: &Path) -> Result<Vec<TaskManifest>, TaskError> {
    let mut manifests = Vec::new();
    for t in SAMPLE_TASKS {
        let task_dir = dir.join(t.name);
        let sfx = source_suffix(t.precision);
        let files = [
            (MANIFEST_FILE.to_string(), manifest_text(t)),
            (format!("{}{sfx}.cu", t.name), baseline_text(t)),
            (format!("harness{sfx}.cu"), harness_text(t)),
        ];
        fs::create_dir_all(&task_dir).map_err(|source| TaskError::Io {
            path: task_dir.clone(),
            source,
        })?;
        for (name, content) in files {
            let path = task_dir.join(name);
            fs::write(&path, content).map_err(|source| TaskError::Io { path, source })?;
        }
        manifests.push(load_manifest(&task_dir)?);
    }
    Ok(manifests)
}

/// Candidate plan used by the demo script for each sample task.
pub fn sample_trials(task: &str) -> Vec<Vec<Trial>> {
    use Trial::*;
    match task {
        "matrix_mul" => vec![
            vec![CompileFail, Speedup(2.4)],
            vec![Speedup(1.9)],
            vec![Speedup(3.1)],
        ],
        "dot_product" => vec![vec![Speedup(1.3)], vec![Speedup(1.6)], vec![Speedup(1.2)]],
        "spmv_csr" => vec![
            vec![Directive("mismatch=2".into()), Speedup(1.1)],
            vec![Speedup(0.9)],
            vec![Speedup(1.4)],
        ],
        "conv2d" => vec![
            vec![Speedup(0.8)],
            vec![CompileFail, CompileFail, Speedup(2.0)],
            vec![Speedup(1.7)],
        ],
        _ => vec![
            vec![Directive("speedups=1.2,1.5,1.8".into())],
            vec![Speedup(1.1)],
            vec![Speedup(2.2)],
        ],
    }
}

/// Demo script covering every manifest.
pub fn sample_script(manifests: &[TaskManifest]) -> Script {
    let mut script = Script::default();
    for m in manifests {
        script
            .entries
            .extend(scripted_rounds(m, &sample_trials(&m.name)).entries);
    }
    script
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::extract_code_write;

    #[test]
    fn sample_suite_loads_and_spans_magnitudes() {
        let dir = tempfile::tempdir().unwrap();
        let manifests = write_sample_suite(dir.path()).unwrap();
        assert_eq!(manifests.len(), 5);
        for m in &manifests {
            let lo = m.sizes.iter().map(|s| s.complexity).min().unwrap() as f64;
            let hi = m.sizes.iter().map(|s| s.complexity).max().unwrap() as f64;
            assert!(hi / lo >= 1000.0, "{}", m.name);
            assert!(m.baseline_source_path().is_file());
        }
    }

    #[test]
    fn coder_reply_extracts() {
        let dir = tempfile::tempdir().unwrap();
        let m = &write_sample_suite(dir.path()).unwrap()[2];
        let w = extract_code_write(
            &coder_reply(m, &Trial::Speedup(1.5)),
            &[],
            "matrix_mul_optimized.cu",
        )
        .unwrap();
        assert_eq!(w.wrapper_name, "matrix_mul_optimized");
        assert!(w.code.contains("@mock speedup=1.5"));
    }

    #[test]
    fn arg_names_strip_types() {
        assert_eq!(
            arg_names(&["const float* a", "int n", "float *out"]),
            ["a", "n", "out"]
        );
    }
}
