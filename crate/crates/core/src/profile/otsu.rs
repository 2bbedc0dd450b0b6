//! Otsu's threshold over exact sample values.
//!
//! Candidates are the midpoints between consecutive distinct sorted values.
//! A sample at or below the threshold belongs to the lower class.

use super::ProfileError;

/// Two between-class variances within this relative distance are a tie; the
/// smaller threshold wins.
pub const OTSU_TIE_RELATIVE_EPS: f64 = 1e-9;

/// Between-class variance `w0 * w1 * (mu0 - mu1)^2` of a split of `n` samples
/// into `n0` samples summing to `sum0` and the rest summing to `total - sum0`.
pub fn between_class_variance(n: usize, n0: usize, sum0: f64, total: f64) -> f64 {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let w0 = n0 as f64 / n as f64;
    let w1 = n1 as f64 / n as f64;
    let mu0 = sum0 / n0 as f64;
    let mu1 = (total - sum0) / n1 as f64;
    w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
}

/// Returns the threshold maximizing between-class variance.
pub fn otsu_threshold(values: &[f64]) -> Result<f64, ProfileError> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 || sorted.first() == sorted.last() {
        return Err(ProfileError::DegenerateDistribution { metric: None });
    }

    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mut prefix = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        prefix += sorted[i];
        if sorted[i] == sorted[i + 1] {
            continue;
        }
        let t = 0.5 * (sorted[i] + sorted[i + 1]);
        let sigma = between_class_variance(n, i + 1, prefix, total);
        match best {
            Some((_, b)) if sigma <= b + OTSU_TIE_RELATIVE_EPS * b.abs() => {}
            _ => best = Some((t, sigma)),
        }
    }
    Ok(best.expect("at least one distinct boundary").0)
}
