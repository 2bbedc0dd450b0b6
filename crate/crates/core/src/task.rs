//! Benchmark task manifests: one TOML file per operator describing its
//! sources, C wrapper, test-size schedule and correctness tolerance.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File name looked up inside each task directory.
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Absolute tolerance applied to FP32 tasks whose manifest omits one.
pub const DEFAULT_FP32_TOLERANCE: f64 = 1e-5;

/// Absolute tolerance applied to BF16 tasks whose manifest omits one.
pub const DEFAULT_BF16_TOLERANCE: f64 = 2e-2;

const BF16_SUFFIX: &str = "_bf16";

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: missing field `{field}`")]
    MissingField { path: PathBuf, field: String },
    #[error("{path}: duplicate test size label {label:?}")]
    DuplicateSize { path: PathBuf, label: String },
    #[error("{path}: manifest declares no test sizes")]
    EmptySizes { path: PathBuf },
    #[error("{path}: `{value}` is not a valid C identifier ({field})")]
    BadIdentifier {
        path: PathBuf,
        field: String,
        value: String,
    },
    #[error("{path}: invalid value for `{field}`: {message}")]
    InvalidValue {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("no task in {dir} matches the filter")]
    EmptySuite { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "fp32")]
    Fp32,
    #[serde(rename = "bf16")]
    Bf16,
}

impl Precision {
    pub fn default_tolerance(self) -> f64 {
        match self {
            Precision::Fp32 => DEFAULT_FP32_TOLERANCE,
            Precision::Bf16 => DEFAULT_BF16_TOLERANCE,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Fp32 => "fp32",
            Precision::Bf16 => "bf16",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Dense,
    Sparse,
    Llm,
    Scientific,
    Numerical,
    Other,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Dense => "dense",
            Category::Sparse => "sparse",
            Category::Llm => "llm",
            Category::Scientific => "scientific",
            Category::Numerical => "numerical",
            Category::Other => "other",
        })
    }
}

/// One entry of a task's size schedule. `complexity` is the theoretical
/// operation count of the naive baseline at this size and is used as the
/// weight when averaging speedups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSize {
    pub label: String,
    pub complexity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub name: String,
    pub category: Category,
    pub precision: Precision,
    pub wrapper_name: String,
    pub wrapper_signature: Vec<String>,
    pub baseline_source: PathBuf,
    pub harness_source: PathBuf,
    pub baseline_compile_command: String,
    pub tolerance: f64,
    pub description: String,
    #[serde(rename = "size")]
    pub sizes: Vec<TestSize>,
    /// Directory the manifest was loaded from; source paths resolve against it.
    #[serde(skip)]
    pub root: PathBuf,
}

impl TaskManifest {
    pub fn baseline_source_path(&self) -> PathBuf {
        self.root.join(&self.baseline_source)
    }

    pub fn harness_source_path(&self) -> PathBuf {
        self.root.join(&self.harness_source)
    }

    pub fn size_index(&self, label: &str) -> Option<usize> {
        self.sizes.iter().position(|s| s.label == label)
    }

    /// The size carrying the largest theoretical workload; ties go to the
    /// later entry in the schedule.
    pub fn heaviest_size(&self) -> &TestSize {
        self.sizes
            .iter()
            .max_by_key(|s| s.complexity)
            .expect("validated manifests have at least one size")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are always representable in TOML")
    }

    /// Parses and validates manifest text. `origin` is used in error messages
    /// and becomes the manifest root when it names a file.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, TaskError> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| TaskError::Malformed {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        raw.validate(origin)
    }
}

/// Loads a manifest from a file, or from `manifest.toml` inside a directory.
pub fn load_manifest(path: &Path) -> Result<TaskManifest, TaskError> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|source| TaskError::Io {
        path: file.clone(),
        source,
    })?;
    TaskManifest::from_toml_str(&text, &file)
}

/// Selects tasks by category and/or precision.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteFilter {
    pub category: Option<Category>,
    pub precision: Option<Precision>,
}

impl SuiteFilter {
    pub fn matches(&self, task: &TaskManifest) -> bool {
        self.category.is_none_or(|c| c == task.category)
            && self.precision.is_none_or(|p| p == task.precision)
    }
}

#[derive(Debug)]
pub struct Suite {
    pub tasks: Vec<TaskManifest>,
    /// Manifests that failed to load, keyed by the offending file.
    pub errors: Vec<(PathBuf, TaskError)>,
}

/// Loads every `*/manifest.toml` under `dir`. Valid tasks are returned in
/// lexicographic name order; broken manifests are reported alongside them.
pub fn enumerate_suite(dir: &Path, filter: &SuiteFilter) -> Result<Suite, TaskError> {
    let entries = fs::read_dir(dir).map_err(|source| TaskError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut candidates: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join(MANIFEST_FILE))
        .filter(|p| p.is_file())
        .collect();
    candidates.sort();

    let mut tasks = Vec::new();
    let mut errors = Vec::new();
    for path in candidates {
        match load_manifest(&path) {
            Ok(task) if filter.matches(&task) => tasks.push(task),
            Ok(_) => {}
            Err(e) => errors.push((path, e)),
        }
    }
    if tasks.is_empty() {
        return Err(TaskError::EmptySuite {
            dir: dir.to_path_buf(),
        });
    }
    tasks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(Suite { tasks, errors })
}

pub fn is_c_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

#[derive(Deserialize)]
struct RawManifest {
    name: Option<String>,
    category: Option<Category>,
    precision: Option<Precision>,
    wrapper_name: Option<String>,
    wrapper_signature: Option<Vec<String>>,
    baseline_source: Option<PathBuf>,
    harness_source: Option<PathBuf>,
    baseline_compile_command: Option<String>,
    tolerance: Option<f64>,
    description: Option<String>,
    #[serde(default)]
    size: Vec<TestSize>,
}

impl RawManifest {
    fn validate(self, origin: &Path) -> Result<TaskManifest, TaskError> {
        let path = origin.to_path_buf();
        let missing = |field: &str| TaskError::MissingField {
            path: path.clone(),
            field: field.to_string(),
        };
        let invalid = |field: &str, message: String| TaskError::InvalidValue {
            path: path.clone(),
            field: field.to_string(),
            message,
        };

        let name = self.name.ok_or_else(|| missing("name"))?;
        let category = self.category.ok_or_else(|| missing("category"))?;
        let precision = self.precision.ok_or_else(|| missing("precision"))?;
        let wrapper_name = self.wrapper_name.ok_or_else(|| missing("wrapper_name"))?;
        let wrapper_signature = self
            .wrapper_signature
            .ok_or_else(|| missing("wrapper_signature"))?;
        let baseline_source = self
            .baseline_source
            .ok_or_else(|| missing("baseline_source"))?;
        let harness_source = self
            .harness_source
            .ok_or_else(|| missing("harness_source"))?;
        let baseline_compile_command = self
            .baseline_compile_command
            .ok_or_else(|| missing("baseline_compile_command"))?;
        let description = self.description.ok_or_else(|| missing("description"))?;

        if !is_c_identifier(&name) {
            return Err(TaskError::BadIdentifier {
                path,
                field: "name".into(),
                value: name,
            });
        }
        if !is_c_identifier(&wrapper_name) {
            return Err(TaskError::BadIdentifier {
                path,
                field: "wrapper_name".into(),
                value: wrapper_name,
            });
        }
        if baseline_compile_command.trim().is_empty() || baseline_compile_command.contains('\n') {
            return Err(invalid(
                "baseline_compile_command",
                "must be a single non-empty line".into(),
            ));
        }

        let has_suffix = |p: &Path| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with(BF16_SUFFIX))
        };
        for (field, source) in [
            ("baseline_source", &baseline_source),
            ("harness_source", &harness_source),
        ] {
            match precision {
                Precision::Bf16 if !has_suffix(source) => {
                    return Err(invalid(
                        field,
                        format!("bf16 sources must carry the `{BF16_SUFFIX}` suffix"),
                    ))
                }
                Precision::Fp32 if has_suffix(source) => {
                    return Err(invalid(
                        field,
                        format!("fp32 sources must not carry the `{BF16_SUFFIX}` suffix"),
                    ))
                }
                _ => {}
            }
        }

        let tolerance = self.tolerance.unwrap_or(precision.default_tolerance());
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(invalid("tolerance", "must be a positive number".into()));
        }

        if self.size.is_empty() {
            return Err(TaskError::EmptySizes { path });
        }
        for (i, size) in self.size.iter().enumerate() {
            if size.complexity == 0 {
                return Err(invalid(
                    "size.complexity",
                    format!("size {:?} has zero complexity", size.label),
                ));
            }
            if self.size[..i].iter().any(|s| s.label == size.label) {
                return Err(TaskError::DuplicateSize {
                    path,
                    label: size.label.clone(),
                });
            }
        }

        let root = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(TaskManifest {
            name,
            category,
            precision,
            wrapper_name,
            wrapper_signature,
            baseline_source,
            harness_source,
            baseline_compile_command,
            tolerance,
            description,
            sizes: self.size,
            root,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MATRIX_MUL: &str = r#"
name = "matrix_mul"
category = "dense"
precision = "fp32"
wrapper_name = "matrix_mul"
wrapper_signature = ["const float* A", "const float* B", "float* C", "int M", "int K", "int N"]
baseline_source = "matrix_mul.cu"
harness_source = "harness.cu"
baseline_compile_command = "nvcc -O2 harness.cu matrix_mul.cu -o bench"
description = "C = A * B for row-major fp32 matrices."

[[size]]
label = "M: 8, K: 8, N: 8"
complexity = 128

[[size]]
label = "M: 256, K: 256, N: 256"
complexity = 33554432

[[size]]
label = "M: 1024, K: 1024, N: 1024"
complexity = 2147483648
"#;

    fn parse(text: &str) -> Result<TaskManifest, TaskError> {
        TaskManifest::from_toml_str(text, Path::new("t/manifest.toml"))
    }

    #[test]
    fn loads_sizes_in_declared_order() {
        let m = parse(MATRIX_MUL).unwrap();
        assert_eq!(m.name, "matrix_mul");
        let complexities: Vec<u64> = m.sizes.iter().map(|s| s.complexity).collect();
        assert_eq!(complexities, vec![128, 33554432, 2147483648]);
        assert_eq!(m.root, Path::new("t"));
        assert_eq!(m.heaviest_size().complexity, 2147483648);
    }

    #[test]
    fn heaviest_size_tie_takes_later_entry() {
        let mut m = parse(MATRIX_MUL).unwrap();
        let top = m.heaviest_size().complexity;
        m.sizes.push(TestSize {
            label: "tied".into(),
            complexity: top,
        });
        assert_eq!(m.heaviest_size().label, "tied");
    }

    #[test]
    fn fp32_tolerance_defaults() {
        let m = parse(MATRIX_MUL).unwrap();
        assert_eq!(m.tolerance, 1e-5);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let text = MATRIX_MUL.replace("M: 256, K: 256, N: 256", "M: 8, K: 8, N: 8");
        assert!(
            matches!(parse(&text), Err(TaskError::DuplicateSize { label, .. }) if label == "M: 8, K: 8, N: 8")
        );
    }

    #[test]
    fn missing_field_is_named() {
        let text = MATRIX_MUL.replace("wrapper_name = \"matrix_mul\"\n", "");
        match parse(&text) {
            Err(TaskError::MissingField { field, .. }) => assert_eq!(field, "wrapper_name"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_sizes_rejected() {
        let head = MATRIX_MUL.split("[[size]]").next().unwrap();
        assert!(matches!(parse(head), Err(TaskError::EmptySizes { .. })));
    }

    #[test]
    fn bad_identifier_rejected() {
        let text = MATRIX_MUL.replace("wrapper_name = \"matrix_mul\"", "wrapper_name = \"2mul\"");
        assert!(matches!(parse(&text), Err(TaskError::BadIdentifier { .. })));
    }

    #[test]
    fn bf16_suffix_enforced() {
        let text = MATRIX_MUL.replace("\"fp32\"", "\"bf16\"");
        assert!(matches!(parse(&text), Err(TaskError::InvalidValue { .. })));
        let ok = text
            .replace("\"matrix_mul.cu\"", "\"matrix_mul_bf16.cu\"")
            .replace("\"harness.cu\"", "\"harness_bf16.cu\"");
        assert_eq!(parse(&ok).unwrap().tolerance, DEFAULT_BF16_TOLERANCE);
    }

    #[test]
    fn identifiers() {
        assert!(is_c_identifier("matrix_mul_optimized"));
        assert!(is_c_identifier("_x1"));
        assert!(!is_c_identifier(""));
        assert!(!is_c_identifier("a-b"));
        assert!(!is_c_identifier("9a"));
    }

    #[test]
    fn round_trips_through_toml() {
        let m = parse(MATRIX_MUL).unwrap();
        let again = parse(&m.to_toml()).unwrap();
        assert_eq!(m, again);
    }
}
