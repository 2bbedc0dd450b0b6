use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::otsu::otsu_threshold;
use super::{
    ProfileError, ProfileReport, COMPUTE_SM_THROUGHPUT, DRAM_THROUGHPUT, MEMORY_THROUGHPUT,
};
use crate::parallel::{self, Parallelism};

/// Threshold (percent) used for all three throughputs when no calibration exists.
pub const DEFAULT_THRESHOLD: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckClass {
    ComputeBound,
    MemoryLatencyBound,
    MemoryBandwidthBound,
}

impl BottleneckClass {
    pub const ALL: [BottleneckClass; 3] = [
        BottleneckClass::ComputeBound,
        BottleneckClass::MemoryLatencyBound,
        BottleneckClass::MemoryBandwidthBound,
    ];

    pub fn index(self) -> usize {
        match self {
            BottleneckClass::ComputeBound => 0,
            BottleneckClass::MemoryLatencyBound => 1,
            BottleneckClass::MemoryBandwidthBound => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BottleneckClass::ComputeBound => "Compute Bound",
            BottleneckClass::MemoryLatencyBound => "Memory Latency Bound",
            BottleneckClass::MemoryBandwidthBound => "Memory Bandwidth Bound",
        }
    }
}

impl fmt::Display for BottleneckClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "corpus", rename_all = "snake_case")]
pub enum Provenance {
    Default,
    Calibrated(String),
}

/// Percent thresholds on the three classification throughputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub compute_t: f64,
    pub dram_t: f64,
    pub mem_t: f64,
    pub provenance: Provenance,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet {
            compute_t: DEFAULT_THRESHOLD,
            dram_t: DEFAULT_THRESHOLD,
            mem_t: DEFAULT_THRESHOLD,
            provenance: Provenance::Default,
        }
    }
}

impl ThresholdSet {
    pub fn new(
        compute_t: f64,
        dram_t: f64,
        mem_t: f64,
        provenance: Provenance,
    ) -> Result<Self, ProfileError> {
        let set = ThresholdSet {
            compute_t,
            dram_t,
            mem_t,
            provenance,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), ProfileError> {
        for (name, value) in [
            ("compute_t", self.compute_t),
            ("dram_t", self.dram_t),
            ("mem_t", self.mem_t),
        ] {
            if !(value > 0.0 && value < 100.0) {
                return Err(ProfileError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("threshold set serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ProfileError> {
        let set: ThresholdSet =
            toml::from_str(text).map_err(|e| ProfileError::Catalog(e.message().to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// Reads a thresholds file, falling back to the defaults when it does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self, ProfileError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_toml_str(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(ProfileError::Catalog(format!("{}: {e}", path.display()))),
        }
    }
}

/// Compute bound above the compute threshold; latency bound when both memory
/// throughputs sit strictly below theirs; bandwidth bound otherwise.
pub fn classify(report: &ProfileReport, thresholds: &ThresholdSet) -> BottleneckClass {
    classify_point(
        report.throughput(COMPUTE_SM_THROUGHPUT),
        report.throughput(DRAM_THROUGHPUT),
        report.throughput(MEMORY_THROUGHPUT),
        thresholds,
    )
}

pub(crate) fn classify_point(
    compute: f64,
    dram: f64,
    mem: f64,
    thresholds: &ThresholdSet,
) -> BottleneckClass {
    if compute > thresholds.compute_t {
        BottleneckClass::ComputeBound
    } else if dram < thresholds.dram_t && mem < thresholds.mem_t {
        BottleneckClass::MemoryLatencyBound
    } else {
        BottleneckClass::MemoryBandwidthBound
    }
}

pub fn classify_batch(
    reports: &[ProfileReport],
    thresholds: &ThresholdSet,
    mode: Parallelism,
) -> Vec<BottleneckClass> {
    parallel::map(reports, mode, |r| classify(r, thresholds))
}

/// Runs Otsu independently on each classification throughput of a corpus of
/// baseline bottleneck kernels.
pub fn calibrate(reports: &[ProfileReport], corpus_id: &str) -> Result<ThresholdSet, ProfileError> {
    let threshold_for = |key: &str| {
        let values: Vec<f64> = reports.iter().map(|r| r.throughput(key)).collect();
        otsu_threshold(&values).map_err(|_| ProfileError::DegenerateDistribution {
            metric: Some(key.to_string()),
        })
    };
    ThresholdSet::new(
        threshold_for(COMPUTE_SM_THROUGHPUT)?,
        threshold_for(DRAM_THROUGHPUT)?,
        threshold_for(MEMORY_THROUGHPUT)?,
        Provenance::Calibrated(corpus_id.to_string()),
    )
}
