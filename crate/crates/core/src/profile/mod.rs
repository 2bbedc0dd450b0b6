//! Hardware profile handling: export parsing, threshold calibration,
//! bottleneck classification and per-class metric filtering.

mod catalog;
mod classify;
mod export;
mod filter;
mod otsu;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{
    Catalog, MetricKey, MetricSpec, Section, CLASSIFICATION_METRICS, COMPUTE_SM_THROUGHPUT,
    DRAM_THROUGHPUT, DURATION, MEMORY_THROUGHPUT,
};
pub use classify::{
    calibrate, classify, classify_batch, BottleneckClass, Provenance, ThresholdSet,
    DEFAULT_THRESHOLD,
};
pub use export::{parse_profiler_export, parse_profiler_export_with, select_dominant};
pub use filter::{
    class_metric_keys, filter_metrics, render_profile_context, FilteredProfile, KeptMetric,
    ProfileMode,
};
pub use otsu::{between_class_variance, otsu_threshold, OTSU_TIE_RELATIVE_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profiler export contains no metric rows")]
    EmptyExport,
    #[error("malformed export row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("kernel `{kernel}` lacks classification metric {metric}")]
    MissingClassificationMetric { kernel: String, metric: String },
    #[error("kernel `{kernel}`: {metric} = {value} is outside [0, 100]")]
    MetricOutOfRange {
        kernel: String,
        metric: String,
        value: f64,
    },
    #[error("degenerate distribution{}: all values equal", .metric.as_ref().map(|m| format!(" for {m}")).unwrap_or_default())]
    DegenerateDistribution { metric: Option<String> },
    #[error("threshold {name} = {value} must lie strictly between 0 and 100")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("metric catalog: {0}")]
    Catalog(String),
}

/// Metrics collected for one kernel launch at one test size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub kernel_name: String,
    pub size_label: String,
    pub duration_ns: f64,
    pub metrics: BTreeMap<MetricKey, f64>,
}

impl ProfileReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(&MetricKey::from(key)).copied()
    }

    /// Value of one of the three classification metrics. Validated reports
    /// always carry them.
    pub fn throughput(&self, key: &str) -> f64 {
        self.metric(key).unwrap_or(0.0)
    }

    pub(crate) fn validate(&self) -> Result<(), ProfileError> {
        for key in CLASSIFICATION_METRICS {
            let value =
                self.metric(key)
                    .ok_or_else(|| ProfileError::MissingClassificationMetric {
                        kernel: self.kernel_name.clone(),
                        metric: key.to_string(),
                    })?;
            if !(0.0..=100.0).contains(&value) {
                return Err(ProfileError::MetricOutOfRange {
                    kernel: self.kernel_name.clone(),
                    metric: key.to_string(),
                    value,
                });
            }
        }
        Ok(())
    }
}
