//! Per-class metric filtering and rendering of profile context for prompts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, MetricKey};
use super::{BottleneckClass, ProfileReport};

const COMPUTE_SET: [&str; 4] = [
    "compute_sm_throughput",
    "issue_slots_busy",
    "executed_ipc_active",
    "sm_busy",
];
const LATENCY_SET: [&str; 4] = [
    "l2_hit_rate",
    "l1tex_hit_rate",
    "executed_ipc_elapsed",
    "mem_busy",
];
const BANDWIDTH_SET: [&str; 4] = [
    "dram_throughput",
    "memory_throughput",
    "max_bandwidth",
    "mem_pipes_busy",
];

/// Stall metric mentioned in latency-bound diagnostics when collected; it is
/// not part of the kept set.
const LATENCY_STALL_METRIC: &str = "warp_cycles_per_executed_instruction";

/// The metrics kept for a class, in presentation order.
pub fn class_metric_keys(class: BottleneckClass) -> &'static [&'static str; 4] {
    match class {
        BottleneckClass::ComputeBound => &COMPUTE_SET,
        BottleneckClass::MemoryLatencyBound => &LATENCY_SET,
        BottleneckClass::MemoryBandwidthBound => &BANDWIDTH_SET,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptMetric {
    pub key: MetricKey,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredProfile {
    pub class: BottleneckClass,
    pub kernel_name: String,
    pub size_label: String,
    pub kept_metrics: Vec<KeptMetric>,
    /// Class metrics the report did not carry.
    pub not_collected: Vec<MetricKey>,
    pub interpretation: String,
}

impl FilteredProfile {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.kept_metrics
            .iter()
            .find(|m| m.key.as_str() == key)
            .map(|m| m.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[default]
    Filtered,
    #[serde(rename = "none")]
    Disabled,
    Full,
}

impl ProfileMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileMode::Filtered => "filtered",
            ProfileMode::Disabled => "none",
            ProfileMode::Full => "full",
        }
    }
}

/// Keeps the class's metric set, in set order, intersected with what the
/// report carries.
pub fn filter_metrics(report: &ProfileReport, class: BottleneckClass) -> FilteredProfile {
    let mut kept_metrics = Vec::with_capacity(4);
    let mut not_collected = Vec::new();
    for &key in class_metric_keys(class) {
        match report.metric(key) {
            Some(value) => kept_metrics.push(KeptMetric {
                key: MetricKey::from(key),
                value,
            }),
            None => not_collected.push(MetricKey::from(key)),
        }
    }
    let interpretation = interpret(report, class, &not_collected);
    FilteredProfile {
        class,
        kernel_name: report.kernel_name.clone(),
        size_label: report.size_label.clone(),
        kept_metrics,
        not_collected,
        interpretation,
    }
}

fn display_name(key: &str) -> &str {
    Catalog::builtin()
        .get(key)
        .map(|m| m.display.as_str())
        .unwrap_or(key)
}

fn interpret(report: &ProfileReport, class: BottleneckClass, missing: &[MetricKey]) -> String {
    let name = display_name;
    let pct = |key: &str| {
        report
            .metric(key)
            .map(|v| format!("{} is {v:.2}%", name(key)))
            .unwrap_or_else(|| format!("{} was not collected", name(key)))
    };
    let mut text = String::new();
    match class {
        BottleneckClass::ComputeBound => {
            let _ = write!(
                text,
                "The SMs are the limiting resource ({}). \
                 A low Issue Slots Busy points at the instruction front end: fetch stalls or \
                 branch divergence, where unrolling and divergence removal help. \
                 A low Executed Ipc Active means the execution pipelines are under-fed.",
                pct("compute_sm_throughput")
            );
        }
        BottleneckClass::MemoryLatencyBound => {
            let _ = write!(
                text,
                "Neither memory interface is busy, so warps are stalled waiting on individual \
                 loads. {}; {}. Poor hit rates mean poor locality: tile the computation or stage \
                 data in shared memory. A low Executed Ipc Elapsed quantifies the stall; raise \
                 arithmetic intensity or parallelism to hide it.",
                pct("l2_hit_rate"),
                pct("l1tex_hit_rate")
            );
            if let Some(v) = report.metric(LATENCY_STALL_METRIC) {
                let _ = write!(text, " {} is {v:.2} cycles.", name(LATENCY_STALL_METRIC));
            }
        }
        BottleneckClass::MemoryBandwidthBound => {
            let _ = write!(
                text,
                "The memory interface is the limiting resource ({}). \
                 DRAM Throughput close to Max Bandwidth confirms saturation: move fewer bytes \
                 through better coalescing, reuse or narrower types. Mem Pipes Busy shows \
                 which memory pipelines carry the pressure.",
                pct("dram_throughput")
            );
        }
    }
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|k| name(k.as_str())).collect();
        let _ = write!(text, " Not collected: {}.", names.join(", "));
    }
    text
}

fn metric_line(out: &mut String, key: &str, value: f64) {
    let catalog = Catalog::builtin();
    let (display, unit) = catalog
        .get(key)
        .map(|m| (m.display.as_str(), m.unit.as_str()))
        .unwrap_or((key, ""));
    if unit.is_empty() {
        let _ = writeln!(out, "- {display}: {value:.2}");
    } else {
        let _ = writeln!(out, "- {display}: {value:.2} {unit}");
    }
}

/// Renders the profile section of the planner context. `filtered` and `raw`
/// are both in test-size order. Filtered blocks carry the class and its kept
/// metrics; full blocks carry every catalogued metric present, by section.
pub fn render_profile_context(
    filtered: &[FilteredProfile],
    mode: ProfileMode,
    raw: &[ProfileReport],
) -> String {
    let mut out = String::new();
    match mode {
        ProfileMode::Disabled => {}
        ProfileMode::Filtered => {
            for (i, f) in filtered.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "Test case size: {}", f.size_label);
                let _ = writeln!(out, "Bottleneck type: {}", f.class);
                for m in &f.kept_metrics {
                    metric_line(&mut out, m.key.as_str(), m.value);
                }
            }
        }
        ProfileMode::Full => {
            let catalog = Catalog::builtin();
            for (i, r) in raw.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                let _ = writeln!(out, "Test case size: {}", r.size_label);
                let mut section = None;
                for spec in catalog.metrics() {
                    let Some(value) = r.metric(spec.key.as_str()) else {
                        continue;
                    };
                    if section != Some(spec.section) {
                        section = Some(spec.section);
                        let _ = writeln!(out, "[{}]", catalog.section_display(spec.section));
                    }
                    metric_line(&mut out, spec.key.as_str(), value);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{classify, ThresholdSet};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn full_report(compute: f64, dram: f64, mem: f64) -> ProfileReport {
        let mut metrics = BTreeMap::new();
        for (i, spec) in Catalog::builtin().metrics().iter().enumerate() {
            metrics.insert(spec.key.clone(), 10.0 + i as f64);
        }
        metrics.insert("compute_sm_throughput".into(), compute);
        metrics.insert("dram_throughput".into(), dram);
        metrics.insert("memory_throughput".into(), mem);
        ProfileReport {
            kernel_name: "k".into(),
            size_label: "N: 1024".into(),
            duration_ns: 1000.0,
            metrics,
        }
    }

    fn keys(f: &FilteredProfile) -> Vec<&str> {
        f.kept_metrics.iter().map(|m| m.key.as_str()).collect()
    }

    #[test]
    fn compute_bound_keeps_four() {
        let r = full_report(45.0, 10.0, 10.0);
        let f = filter_metrics(&r, BottleneckClass::ComputeBound);
        assert_eq!(keys(&f), COMPUTE_SET.to_vec());
        assert!(f.not_collected.is_empty());
    }

    #[test]
    fn latency_missing_l2_is_flagged() {
        let mut r = full_report(10.0, 10.0, 10.0);
        r.metrics.remove(&MetricKey::from("l2_hit_rate"));
        let f = filter_metrics(&r, BottleneckClass::MemoryLatencyBound);
        assert_eq!(f.kept_metrics.len(), 3);
        assert_eq!(f.not_collected, vec![MetricKey::from("l2_hit_rate")]);
        assert!(f.interpretation.contains("Not collected: L2 Hit Rate"));
        // the stall metric is reported in prose only
        assert!(f
            .interpretation
            .contains("Warp Cycles Per Executed Instruction"));
        assert!(f.metric(LATENCY_STALL_METRIC).is_none());
    }

    #[test]
    fn bandwidth_subset() {
        let mut r = full_report(10.0, 60.0, 65.0);
        r.metrics.remove(&MetricKey::from("max_bandwidth"));
        let f = filter_metrics(&r, BottleneckClass::MemoryBandwidthBound);
        for k in keys(&f) {
            assert!(BANDWIDTH_SET.contains(&k));
        }
    }

    #[test]
    fn render_modes() {
        let r = full_report(45.0, 10.0, 10.0);
        let f = filter_metrics(&r, classify(&r, &ThresholdSet::default()));
        let raw = vec![r];
        let filtered = vec![f];
        assert_eq!(
            render_profile_context(&filtered, ProfileMode::Disabled, &raw),
            ""
        );

        let text = render_profile_context(&filtered, ProfileMode::Filtered, &raw);
        assert_eq!(text.lines().filter(|l| l.starts_with("- ")).count(), 4);
        assert!(text.contains("Bottleneck type: Compute Bound"));

        let full = render_profile_context(&filtered, ProfileMode::Full, &raw);
        assert_eq!(full.lines().filter(|l| l.starts_with("- ")).count(), 25);
    }

    #[test]
    fn full_mode_counts_present_metrics() {
        let mut r = full_report(45.0, 10.0, 10.0);
        let drop: Vec<MetricKey> = r.metrics.keys().skip(12).cloned().collect();
        let mut kept = r.metrics.len();
        for k in drop {
            if !crate::profile::CLASSIFICATION_METRICS.contains(&k.as_str()) {
                r.metrics.remove(&k);
                kept -= 1;
            }
        }
        let full = render_profile_context(&[], ProfileMode::Full, &[r]);
        assert_eq!(full.lines().filter(|l| l.starts_with("- ")).count(), kept);
    }

    fn arb_report() -> impl Strategy<Value = ProfileReport> {
        let n = Catalog::builtin().metrics().len();
        (
            prop::collection::vec(prop::option::of(0.0f64..100.0), n),
            0.0f64..100.0,
            0.0f64..100.0,
            0.0f64..100.0,
        )
            .prop_map(|(values, c, d, m)| {
                let mut metrics = BTreeMap::new();
                for (spec, v) in Catalog::builtin().metrics().iter().zip(values) {
                    if let Some(v) = v {
                        metrics.insert(spec.key.clone(), v);
                    }
                }
                metrics.insert("compute_sm_throughput".into(), c);
                metrics.insert("dram_throughput".into(), d);
                metrics.insert("memory_throughput".into(), m);
                ProfileReport {
                    kernel_name: "k".into(),
                    size_label: "N: 8".into(),
                    duration_ns: 1.0,
                    metrics,
                }
            })
    }

    proptest! {
        #[test]
        fn kept_keys_stay_in_class_set(r in arb_report()) {
            for class in BottleneckClass::ALL {
                let f = filter_metrics(&r, class);
                for m in &f.kept_metrics {
                    prop_assert!(class_metric_keys(class).contains(&m.key.as_str()));
                }
                prop_assert_eq!(f.kept_metrics.len() + f.not_collected.len(), 4);
            }
        }

        #[test]
        fn filtered_context_never_longer_than_full(reports in prop::collection::vec(arb_report(), 1..4)) {
            let t = ThresholdSet::default();
            let filtered: Vec<FilteredProfile> =
                reports.iter().map(|r| filter_metrics(r, classify(r, &t))).collect();
            let f = render_profile_context(&filtered, ProfileMode::Filtered, &reports);
            let full = render_profile_context(&filtered, ProfileMode::Full, &reports);
            prop_assert!(f.len() <= full.len(), "filtered {} > full {}", f.len(), full.len());
        }
    }
}
