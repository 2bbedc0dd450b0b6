//! Parser for the profiler's comma-separated "details" export.
//!
//! Two layouts are accepted. The profiler's own export has a header row and
//! many columns, of which `ID`, `Kernel Name`, `Section Name`, `Metric Name`,
//! `Metric Unit` and `Metric Value` are used. Headerless input is read as
//! five positional columns: kernel, section, metric, unit, value.

use std::collections::BTreeMap;

use super::catalog::{Catalog, MetricKey, DURATION};
use super::{ProfileError, ProfileReport};

struct Columns {
    id: Option<usize>,
    kernel: usize,
    section: usize,
    metric: usize,
    unit: usize,
    value: usize,
}

const POSITIONAL: Columns = Columns {
    id: None,
    kernel: 0,
    section: 1,
    metric: 2,
    unit: 3,
    value: 4,
};

impl Columns {
    fn from_header(record: &csv::StringRecord) -> Option<Columns> {
        let find = |name: &str| record.iter().position(|f| f.trim() == name);
        Some(Columns {
            id: find("ID"),
            kernel: find("Kernel Name")?,
            section: find("Section Name")?,
            metric: find("Metric Name")?,
            unit: find("Metric Unit")?,
            value: find("Metric Value")?,
        })
    }

    fn width(&self) -> usize {
        [
            self.kernel,
            self.section,
            self.metric,
            self.unit,
            self.value,
        ]
        .into_iter()
        .chain(self.id)
        .max()
        .unwrap_or(0)
            + 1
    }
}

/// Parses an export with the builtin catalog.
pub fn parse_profiler_export(text: &str) -> Result<Vec<ProfileReport>, ProfileError> {
    parse_profiler_export_with(text, Catalog::builtin())
}

/// Parses an export into one report per kernel launch, in order of first
/// appearance. Metrics unknown to the catalog are ignored. Every report must
/// carry the three classification throughputs.
pub fn parse_profiler_export_with(
    text: &str,
    catalog: &Catalog,
) -> Result<Vec<ProfileReport>, ProfileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'='))
        .from_reader(text.as_bytes());

    let mut columns: Option<Columns> = None;
    let mut reports: Vec<ProfileReport> = Vec::new();
    // (launch identity) -> index into `reports`
    let mut open: BTreeMap<String, usize> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| ProfileError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if columns.is_none() {
            if let Some(header) = Columns::from_header(&record) {
                columns = Some(header);
                continue;
            }
            columns = Some(POSITIONAL);
        }
        let cols = columns.as_ref().expect("set above");
        if record.len() < cols.width() {
            return Err(ProfileError::MalformedRow {
                line,
                message: format!(
                    "expected at least {} columns, got {}",
                    cols.width(),
                    record.len()
                ),
            });
        }

        let kernel = record[cols.kernel].trim();
        let Some(spec) = catalog.resolve(Some(&record[cols.section]), &record[cols.metric]) else {
            continue;
        };
        let unit = record[cols.unit].trim();
        let mut value =
            parse_number(&record[cols.value]).ok_or_else(|| ProfileError::MalformedRow {
                line,
                message: format!("unparseable value {:?}", &record[cols.value]),
            })?;
        if spec.key.as_str() == DURATION {
            value *= duration_scale(unit).ok_or_else(|| ProfileError::MalformedRow {
                line,
                message: format!("unknown duration unit {unit:?}"),
            })?;
        }

        let identity = match cols.id {
            Some(i) => format!("{}\u{1f}{kernel}", record[i].trim()),
            None => kernel.to_string(),
        };
        let slot = match open.get(&identity) {
            // A repeated metric without launch ids means a new launch of the same kernel.
            Some(&i) if cols.id.is_some() || !reports[i].metrics.contains_key(&spec.key) => i,
            _ => {
                reports.push(ProfileReport {
                    kernel_name: kernel.to_string(),
                    size_label: String::new(),
                    duration_ns: 0.0,
                    metrics: BTreeMap::new(),
                });
                open.insert(identity, reports.len() - 1);
                reports.len() - 1
            }
        };
        let report = &mut reports[slot];
        if spec.key.as_str() == DURATION {
            report.duration_ns = value;
        }
        report.metrics.insert(MetricKey::clone(&spec.key), value);
    }

    if reports.is_empty() {
        return Err(ProfileError::EmptyExport);
    }
    for report in &reports {
        report.validate()?;
    }
    Ok(reports)
}

/// Picks the launch with the largest duration; the first one wins ties.
pub fn select_dominant(reports: Vec<ProfileReport>) -> Option<ProfileReport> {
    let mut best: Option<ProfileReport> = None;
    for r in reports {
        if best.as_ref().is_none_or(|b| r.duration_ns > b.duration_ns) {
            best = Some(r);
        }
    }
    best
}

fn parse_number(raw: &str) -> Option<f64> {
    let cleaned: String = raw.trim().chars().filter(|&c| c != ',').collect();
    let v: f64 = cleaned.parse().ok()?;
    v.is_finite().then_some(v)
}

fn duration_scale(unit: &str) -> Option<f64> {
    Some(match unit {
        "nsecond" | "ns" | "" => 1.0,
        "usecond" | "us" => 1e3,
        "msecond" | "ms" => 1e6,
        "second" | "s" => 1e9,
        _ => return None,
    })
}
