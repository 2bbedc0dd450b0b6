//! The metric catalog: a bijection between canonical snake_case metric keys
//! and the profiler's display names, grouped by profiling section.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::ProfileError;

const BUILTIN_CATALOG: &str = include_str!("../../data/ncu-2024.1.toml");

/// Canonical metric identifier, e.g. `dram_throughput`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricKey(String);

impl MetricKey {
    pub fn new(name: impl Into<String>) -> Self {
        MetricKey(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MetricKey {
    fn from(s: &str) -> Self {
        MetricKey(s.to_string())
    }
}

pub const COMPUTE_SM_THROUGHPUT: &str = "compute_sm_throughput";
pub const DRAM_THROUGHPUT: &str = "dram_throughput";
pub const MEMORY_THROUGHPUT: &str = "memory_throughput";
pub const DURATION: &str = "duration";

/// The three throughput metrics that drive classification.
pub const CLASSIFICATION_METRICS: [&str; 3] =
    [COMPUTE_SM_THROUGHPUT, DRAM_THROUGHPUT, MEMORY_THROUGHPUT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    ComputeWorkload,
    SpeedOfLight,
    MemoryWorkload,
    Occupancy,
    Scheduler,
    WarpState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub key: MetricKey,
    pub display: String,
    pub section: Section,
    pub unit: String,
}

#[derive(Debug, Clone, Deserialize)]
struct SectionSpec {
    key: Section,
    names: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    profiler_version: String,
    section: Vec<SectionSpec>,
    metric: Vec<MetricSpec>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    profiler_version: String,
    metrics: Vec<MetricSpec>,
    sections: Vec<SectionSpec>,
    by_key: HashMap<MetricKey, usize>,
    by_display: HashMap<String, usize>,
}

impl Catalog {
    /// Parses a catalog file. Fails unless keys and display names are both unique.
    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| ProfileError::Catalog(e.message().to_string()))?;
        let mut by_key = HashMap::new();
        let mut by_display = HashMap::new();
        for (i, m) in file.metric.iter().enumerate() {
            if by_key.insert(m.key.clone(), i).is_some() {
                return Err(ProfileError::Catalog(format!("duplicate key {}", m.key)));
            }
            if by_display.insert(m.display.clone(), i).is_some() {
                return Err(ProfileError::Catalog(format!(
                    "duplicate display name {:?}",
                    m.display
                )));
            }
        }
        for key in CLASSIFICATION_METRICS.iter().chain([&DURATION]) {
            if !by_key.contains_key(&MetricKey::from(*key)) {
                return Err(ProfileError::Catalog(format!("catalog lacks {key}")));
            }
        }
        Ok(Catalog {
            profiler_version: file.profiler_version,
            metrics: file.metric,
            sections: file.section,
            by_key,
            by_display,
        })
    }

    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            Catalog::from_toml_str(BUILTIN_CATALOG).expect("builtin catalog is well-formed")
        })
    }

    pub fn profiler_version(&self) -> &str {
        &self.profiler_version
    }

    /// Metrics in catalog order (grouped by section).
    pub fn metrics(&self) -> &[MetricSpec] {
        &self.metrics
    }

    pub fn get(&self, key: &str) -> Option<&MetricSpec> {
        self.by_key
            .get(&MetricKey::from(key))
            .map(|&i| &self.metrics[i])
    }

    /// Resolves a display name as it appears in an export. When the export
    /// carries a section name, the metric only matches inside its own section,
    /// since the profiler reuses some display names across sections.
    pub fn resolve(&self, section_name: Option<&str>, display: &str) -> Option<&MetricSpec> {
        let spec = self
            .by_display
            .get(display.trim())
            .map(|&i| &self.metrics[i])?;
        match section_name {
            None => Some(spec),
            Some(name) => {
                let section = self.section_of(name)?;
                (section == spec.section).then_some(spec)
            }
        }
    }

    pub fn section_of(&self, name: &str) -> Option<Section> {
        let name = name.trim();
        self.sections
            .iter()
            .find(|s| s.names.iter().any(|n| n == name))
            .map(|s| s.key)
    }

    pub fn section_display(&self, section: Section) -> &str {
        self.sections
            .iter()
            .find(|s| s.key == section)
            .and_then(|s| s.names.first())
            .map(String::as_str)
            .unwrap_or("")
    }
}
