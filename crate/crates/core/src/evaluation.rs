//! Validity, complexity-weighted scoring, success curves, bottleneck
//! migration and per-metric improvement statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{class_metric_keys, BottleneckClass, FilteredProfile};
use crate::task::TaskManifest;
use crate::toolchain::{Outcome, SizeResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no size results to score")]
    EmptyResults,
    #[error("size {0:?} has a non-positive weight")]
    NonPositiveWeight(String),
    #[error("size {0:?} has a non-positive speedup")]
    NonPositiveSpeedup(String),
    #[error("no scores given")]
    EmptyScores,
    #[error("thresholds must be ascending")]
    UnsortedTaus,
}

/// True iff the program compiled, ran, passed, and reported every size of
/// the manifest schedule.
pub fn check_valid(outcome: &Outcome, manifest: &TaskManifest) -> bool {
    outcome.compiled
        && outcome.ran
        && outcome.correct
        && manifest
            .sizes
            .iter()
            .all(|s| outcome.size_results.iter().any(|r| r.size_label == s.label))
}

/// Speedup averaged with each size weighted by its complexity.
pub fn weighted_score(results: &[SizeResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in results {
        if r.complexity == 0 {
            return Err(EvalError::NonPositiveWeight(r.size_label.clone()));
        }
        if r.speedup.is_nan() || r.speedup <= 0.0 {
            return Err(EvalError::NonPositiveSpeedup(r.size_label.clone()));
        }
        let w = r.complexity as f64;
        num += w * r.speedup;
        den += w;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub p: f64,
    pub valid: bool,
    pub per_size: Vec<SizeResult>,
}

impl Score {
    pub fn invalid() -> Self {
        Score {
            p: 0.0,
            valid: false,
            per_size: Vec::new(),
        }
    }

    pub fn from_outcome(outcome: &Outcome, manifest: &TaskManifest) -> Self {
        if !check_valid(outcome, manifest) {
            return Score::invalid();
        }
        match weighted_score(&outcome.size_results) {
            Ok(p) => Score {
                p,
                valid: true,
                per_size: outcome.size_results.clone(),
            },
            Err(_) => Score::invalid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub taus: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Fraction of all scores that are valid with P strictly above each tau.
pub fn cumulative_success(scores: &[Score], taus: &[f64]) -> Result<SuccessCurve, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    if taus
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(EvalError::UnsortedTaus);
    }
    let n = scores.len() as f64;
    let rates = taus
        .iter()
        .map(|&tau| scores.iter().filter(|s| s.valid && s.p > tau).count() as f64 / n)
        .collect();
    Ok(SuccessCurve {
        taus: taus.to_vec(),
        rates,
    })
}

/// Counts indexed `[before][after]` in `BottleneckClass::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MigrationMatrix {
    pub counts: [[u64; 3]; 3],
}

impl MigrationMatrix {
    pub fn get(&self, before: BottleneckClass, after: BottleneckClass) -> u64 {
        self.counts[before.index()][after.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; 3] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn column_sums(&self) -> [u64; 3] {
        let mut out = [0; 3];
        for row in &self.counts {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

pub fn migration_matrix(pairs: &[(BottleneckClass, BottleneckClass)]) -> MigrationMatrix {
    let mut m = MigrationMatrix::default();
    for &(before, after) in pairs {
        m.counts[before.index()][after.index()] += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricImprovement {
    pub metric: String,
    /// `None` when no pair carried the metric with a positive before value.
    pub mean_pct: Option<f64>,
    pub std_pct: Option<f64>,
    pub pairs_used: usize,
    pub pairs_excluded: usize,
}

/// Percent change of each class metric between paired profiles whose
/// before-profile has `class`. Sample standard deviation; a single pair
/// has deviation 0.
pub fn metric_improvements(
    pairs: &[(FilteredProfile, FilteredProfile)],
    class: BottleneckClass,
) -> Vec<MetricImprovement> {
    let relevant: Vec<_> = pairs.iter().filter(|(b, _)| b.class == class).collect();
    class_metric_keys(class)
        .iter()
        .map(|&key| {
            let changes: Vec<f64> = relevant
                .iter()
                .filter_map(|(b, a)| {
                    let before = b.metric(key)?;
                    let after = a.metric(key)?;
                    (before > 0.0).then(|| 100.0 * (after - before) / before)
                })
                .collect();
            let (mean_pct, std_pct) = mean_and_sample_std(&changes);
            MetricImprovement {
                metric: key.to_string(),
                mean_pct,
                std_pct,
                pairs_used: changes.len(),
                pairs_excluded: relevant.len() - changes.len(),
            }
        })
        .collect()
}

fn mean_and_sample_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{KeptMetric, MetricKey};
    use proptest::prelude::*;

    fn sr(complexity: u64, speedup: f64) -> SizeResult {
        SizeResult {
            size_label: format!("N: {complexity}"),
            complexity,
            speedup,
        }
    }

    fn score(p: f64, valid: bool) -> Score {
        Score {
            p,
            valid,
            per_size: Vec::new(),
        }
    }

    #[test]
    fn weighted_examples() {
        assert_eq!(weighted_score(&[sr(128, 1.0)]).unwrap(), 1.0);
        let p = weighted_score(&[sr(128, 2.0), sr(1024, 4.0)]).unwrap();
        // 128*2 + 1024*4 = 4352 over 1152
        assert!((p - 4352.0 / 1152.0).abs() <= 1e-12 * p);
        assert_eq!(weighted_score(&[]), Err(EvalError::EmptyResults));
        assert!(matches!(
            weighted_score(&[sr(0, 1.0)]),
            Err(EvalError::NonPositiveWeight(_))
        ));
    }

    #[test]
    fn success_curve_fixture() {
        let scores = [
            score(2.5, true),
            score(0.8, true),
            score(1.2, true),
            Score::invalid(),
        ];
        let c = cumulative_success(&scores, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.rates, vec![0.75, 0.5, 0.25]);
        let all_invalid = [Score::invalid(), Score::invalid()];
        assert_eq!(
            cumulative_success(&all_invalid, &[0.0, 1.0]).unwrap().rates,
            vec![0.0, 0.0]
        );
        assert_eq!(
            cumulative_success(&[score(0.3, true)], &[0.0])
                .unwrap()
                .rates,
            vec![1.0]
        );
        assert_eq!(cumulative_success(&[], &[0.0]), Err(EvalError::EmptyScores));
        assert_eq!(
            cumulative_success(&scores, &[1.0, 0.0]),
            Err(EvalError::UnsortedTaus)
        );
    }

    #[test]
    fn migration_examples() {
        use BottleneckClass::*;
        let m = migration_matrix(&[
            (MemoryLatencyBound, MemoryBandwidthBound),
            (MemoryLatencyBound, MemoryBandwidthBound),
            (ComputeBound, ComputeBound),
        ]);
        assert_eq!(m.get(MemoryLatencyBound, MemoryBandwidthBound), 2);
        assert_eq!(m.get(ComputeBound, ComputeBound), 1);
        assert_eq!(m.total(), 3);
        assert_eq!(migration_matrix(&[]), MigrationMatrix::default());
        let id = migration_matrix(&[(ComputeBound, ComputeBound); 50]);
        assert_eq!(id.trace(), 50);
        assert_eq!(id.total(), 50);
    }

    fn bw_profile(dram: Option<f64>) -> FilteredProfile {
        FilteredProfile {
            class: BottleneckClass::MemoryBandwidthBound,
            kernel_name: "k".into(),
            size_label: "n".into(),
            kept_metrics: dram
                .map(|v| KeptMetric {
                    key: MetricKey::from("dram_throughput"),
                    value: v,
                })
                .into_iter()
                .collect(),
            not_collected: Vec::new(),
            interpretation: String::new(),
        }
    }

    #[test]
    fn improvement_examples() {
        let class = BottleneckClass::MemoryBandwidthBound;
        let dram = |v: &[MetricImprovement]| {
            v.iter()
                .find(|m| m.metric == "dram_throughput")
                .cloned()
                .unwrap()
        };

        let one = metric_improvements(&[(bw_profile(Some(10.0)), bw_profile(Some(30.0)))], class);
        let d = dram(&one);
        assert_eq!((d.mean_pct, d.std_pct), (Some(200.0), Some(0.0)));

        let zero = metric_improvements(&[(bw_profile(Some(0.0)), bw_profile(Some(30.0)))], class);
        assert_eq!(dram(&zero).pairs_excluded, 1);
        assert_eq!(dram(&zero).mean_pct, None);

        let two = metric_improvements(
            &[
                (bw_profile(Some(10.0)), bw_profile(Some(20.0))),
                (bw_profile(Some(10.0)), bw_profile(Some(40.0))),
            ],
            class,
        );
        let d = dram(&two);
        assert_eq!(d.mean_pct, Some(200.0));
        // deviations of +-100 around the mean, n - 1 = 1
        assert!((d.std_pct.unwrap() - (2.0f64 * 100.0 * 100.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn validity_requires_every_size() {
        let manifest = crate::toolchain::tests::manifest("fp32", "rms_norm.cu");
        let mut o = Outcome {
            compiled: true,
            ran: true,
            correct: true,
            size_results: vec![SizeResult {
                size_label: manifest.sizes[0].label.clone(),
                complexity: manifest.sizes[0].complexity,
                speedup: 1.0,
            }],
            ..Default::default()
        };
        assert!(check_valid(&o, &manifest));
        o.size_results.clear();
        assert!(!check_valid(&o, &manifest));
        assert!(!check_valid(&Outcome::failed("x"), &manifest));
    }

    proptest! {
        #[test]
        fn score_bounds_and_scale(pairs in prop::collection::vec((1u64..1_000_000, 0.01f64..100.0), 1..20), k in 1u64..1000) {
            let results: Vec<SizeResult> = pairs.iter().map(|&(c, s)| sr(c, s)).collect();
            let p = weighted_score(&results).unwrap();
            let lo = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12));
            let scaled: Vec<SizeResult> = pairs.iter().map(|&(c, s)| sr(c * k, s)).collect();
            let q = weighted_score(&scaled).unwrap();
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0) * 10.0);
        }

        #[test]
        fn migration_sums(pairs in prop::collection::vec((0usize..3, 0usize..3), 0..100)) {
            let pairs: Vec<_> = pairs.iter().map(|&(b, a)| (BottleneckClass::ALL[b], BottleneckClass::ALL[a])).collect();
            let m = migration_matrix(&pairs);
            prop_assert_eq!(m.total(), pairs.len() as u64);
            for c in BottleneckClass::ALL {
                prop_assert_eq!(m.row_sums()[c.index()], pairs.iter().filter(|p| p.0 == c).count() as u64);
                prop_assert_eq!(m.column_sums()[c.index()], pairs.iter().filter(|p| p.1 == c).count() as u64);
            }
        }
    }
}
