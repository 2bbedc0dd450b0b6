//! Per-task result files, the suite aggregate and a markdown summary.
//! Output is a pure function of the runs: no timestamps, stable ordering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{accumulate_usage, UsageSummary};
use crate::evaluation::{
    cumulative_success, metric_improvements, migration_matrix, MetricImprovement, MigrationMatrix,
    Score, SuccessCurve,
};
use crate::pipeline::{CandidateSummary, SchemeEntry, TaskRun};
use crate::profile::{filter_metrics, BottleneckClass, FilteredProfile};
use crate::task::{Category, Precision, TaskManifest};
use crate::toolchain::{Outcome, SizeResult};

pub const RESULTS_FILE: &str = "results.json";
pub const SUITE_FILE: &str = "suite.json";
pub const SUMMARY_FILE: &str = "summary.md";

/// Thresholds used when the caller gives none.
pub const DEFAULT_TAUS: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no task results found under {0}")]
    NoRuns(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl ToString) -> ReportError {
    ReportError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub category: Category,
    pub precision: Precision,
    /// Set when the run aborted.
    pub error: Option<String>,
    /// Best score among valid generated candidates; `None` if none was valid.
    pub candidate_score: Option<f64>,
    /// Score of the kept program; 1.0 when no candidate beat the baseline.
    pub best_score: f64,
    pub best_round: u32,
    pub completed_rounds: u32,
    pub best_sizes: Vec<SizeResult>,
    /// Classification at the heaviest test size.
    pub class_before: Option<BottleneckClass>,
    pub class_after: Option<BottleneckClass>,
    /// Heaviest-size profiles, both filtered with the before class.
    pub profile_before: Option<FilteredProfile>,
    pub profile_after: Option<FilteredProfile>,
    pub ledger: Vec<SchemeEntry>,
    pub candidates: Vec<CandidateSummary>,
    pub usage: UsageSummary,
}

impl TaskReport {
    pub fn score(&self) -> Score {
        match self.candidate_score {
            Some(p) if self.error.is_none() => Score {
                p,
                valid: true,
                per_size: Vec::new(),
            },
            _ => Score::invalid(),
        }
    }

    pub fn from_run(run: &TaskRun) -> Self {
        let m = &run.manifest;
        let mut report = TaskReport {
            task: m.name.clone(),
            category: m.category,
            precision: m.precision,
            error: None,
            candidate_score: None,
            best_score: 1.0,
            best_round: 0,
            completed_rounds: 0,
            best_sizes: Vec::new(),
            class_before: None,
            class_after: None,
            profile_before: None,
            profile_after: None,
            ledger: Vec::new(),
            candidates: Vec::new(),
            usage: UsageSummary::default(),
        };
        let state = match &run.result {
            Ok(s) => s,
            Err(e) => {
                report.error = Some(e.clone());
                return report;
            }
        };
        report.candidate_score = state.best_candidate_score();
        report.best_score = state.best_score;
        report.best_round = state.best_round;
        report.completed_rounds = state.completed_rounds;
        report.best_sizes = state.best_outcome.size_results.clone();
        report.ledger = state.ledger.entries.clone();
        report.candidates = state.candidates.clone();
        report.usage = accumulate_usage(&state.exchanges);

        let before = heaviest_profile(m, &state.baseline);
        let after = heaviest_profile(m, &state.best_outcome);
        if let Some((class, filtered)) = before {
            report.class_before = Some(class);
            report.profile_before = Some(filtered);
            if let Some((after_class, _)) = &after {
                report.class_after = Some(*after_class);
                let raw = state
                    .best_outcome
                    .raw_profiles
                    .iter()
                    .find(|r| r.size_label == m.heaviest_size().label);
                report.profile_after = raw.map(|r| filter_metrics(r, class));
            }
        }
        report
    }
}

fn heaviest_profile(
    m: &TaskManifest,
    outcome: &Outcome,
) -> Option<(BottleneckClass, FilteredProfile)> {
    let label = &m.heaviest_size().label;
    outcome
        .filtered_profiles
        .iter()
        .find(|f| &f.size_label == label)
        .map(|f| (f.class, f.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub task_count: usize,
    pub failed_tasks: Vec<String>,
    pub scores: BTreeMap<String, Option<f64>>,
    pub success_curve: SuccessCurve,
    /// `None` when some task carries no profiles.
    pub migration: Option<MigrationMatrix>,
    pub improvements: BTreeMap<BottleneckClass, Vec<MetricImprovement>>,
    pub usage_total: UsageSummary,
    pub usage_per_task: UsageSummary,
}

pub fn build_suite_report(tasks: &[TaskReport], taus: &[f64]) -> Result<SuiteReport, ReportError> {
    if tasks.is_empty() {
        return Err(ReportError::NoRuns(PathBuf::new()));
    }
    let scores: Vec<Score> = tasks.iter().map(TaskReport::score).collect();
    let success_curve =
        cumulative_success(&scores, taus).map_err(|e| io_err(Path::new("taus"), e))?;

    let completed: Vec<&TaskReport> = tasks.iter().filter(|t| t.error.is_none()).collect();
    let pairs: Option<Vec<_>> = completed
        .iter()
        .map(|t| Some((t.class_before?, t.class_after?)))
        .collect();
    let migration = pairs
        .filter(|p| !p.is_empty())
        .map(|p| migration_matrix(&p));

    let profile_pairs: Vec<(FilteredProfile, FilteredProfile)> = completed
        .iter()
        .filter_map(|t| Some((t.profile_before.clone()?, t.profile_after.clone()?)))
        .collect();
    let mut improvements = BTreeMap::new();
    for class in BottleneckClass::ALL {
        if profile_pairs.iter().any(|(b, _)| b.class == class) {
            improvements.insert(class, metric_improvements(&profile_pairs, class));
        }
    }

    let usages: Vec<UsageSummary> = completed.iter().map(|t| t.usage.clone()).collect();
    let mut usage_total = UsageSummary::default();
    for u in &usages {
        usage_total.total.calls += u.total.calls;
        usage_total.total.prompt_tokens += u.total.prompt_tokens;
        usage_total.total.completion_tokens += u.total.completion_tokens;
        usage_total.total.cost_usd += u.total.cost_usd;
        usage_total.estimated_calls += u.estimated_calls;
        for (role, r) in &u.by_role {
            let e = usage_total.by_role.entry(*role).or_default();
            e.calls += r.calls;
            e.prompt_tokens += r.prompt_tokens;
            e.completion_tokens += r.completion_tokens;
            e.cost_usd += r.cost_usd;
        }
    }

    Ok(SuiteReport {
        task_count: tasks.len(),
        failed_tasks: tasks
            .iter()
            .filter(|t| t.error.is_some())
            .map(|t| t.task.clone())
            .collect(),
        scores: tasks
            .iter()
            .map(|t| (t.task.clone(), t.score().valid.then_some(t.score().p)))
            .collect(),
        success_curve,
        migration,
        improvements,
        usage_total,
        usage_per_task: UsageSummary::mean(&usages),
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|v| format!("{v:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

pub fn render_summary(tasks: &[TaskReport], suite: &SuiteReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Optimization summary\n");
    let _ = writeln!(
        s,
        "{} tasks, {} failed.\n",
        suite.task_count,
        suite.failed_tasks.len()
    );

    let _ = writeln!(s, "## Tasks\n");
    let _ = writeln!(s, "| task | category | precision | best P | best candidate P | best round | bottleneck | cost (USD) |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for t in tasks {
        let class = match (t.class_before, t.class_after) {
            (Some(b), Some(a)) => format!("{b} -> {a}"),
            _ => "-".into(),
        };
        let best = match &t.error {
            Some(_) => "failed".to_string(),
            None => format!("{:.4}", t.best_score),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {:.6} |",
            t.task,
            t.category,
            t.precision,
            best,
            fmt_opt(t.candidate_score, 4),
            t.best_round,
            class,
            t.usage.total.cost_usd
        );
    }

    let _ = writeln!(s, "\n## Cumulative success rate\n");
    let _ = writeln!(s, "| tau | rate |");
    let _ = writeln!(s, "|---|---|");
    for (tau, rate) in suite
        .success_curve
        .taus
        .iter()
        .zip(&suite.success_curve.rates)
    {
        let _ = writeln!(s, "| {tau} | {rate:.4} |");
    }

    let _ = writeln!(s, "\n## Bottleneck migration\n");
    match &suite.migration {
        None => {
            let _ = writeln!(s, "Unavailable: some runs carry no profiles.");
        }
        Some(m) => {
            let _ = writeln!(
                s,
                "| before \\ after | {} | {} | {} |",
                BottleneckClass::ALL[0],
                BottleneckClass::ALL[1],
                BottleneckClass::ALL[2]
            );
            let _ = writeln!(s, "|---|---|---|---|");
            for b in BottleneckClass::ALL {
                let row = m.counts[b.index()];
                let _ = writeln!(s, "| {b} | {} | {} | {} |", row[0], row[1], row[2]);
            }
        }
    }

    let _ = writeln!(s, "\n## Metric change by starting class\n");
    if suite.improvements.is_empty() {
        let _ = writeln!(s, "No profiled task pairs.");
    }
    for (class, list) in &suite.improvements {
        let _ = writeln!(s, "### {class}\n");
        let _ = writeln!(s, "| metric | mean % | std % | pairs | excluded |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for m in list {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                m.metric,
                fmt_opt(m.mean_pct, 2),
                fmt_opt(m.std_pct, 2),
                m.pairs_used,
                m.pairs_excluded
            );
        }
        s.push('\n');
    }

    let _ = writeln!(s, "## Token usage\n");
    let _ = writeln!(
        s,
        "| scope | calls | prompt tokens | completion tokens | cost (USD) |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (scope, u) in [
        ("total", &suite.usage_total),
        ("per task (mean)", &suite.usage_per_task),
    ] {
        let _ = writeln!(
            s,
            "| {scope} | {} | {} | {} | {:.6} |",
            u.total.calls, u.total.prompt_tokens, u.total.completion_tokens, u.total.cost_usd
        );
    }
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(value).expect("reports serialize");
    fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}

/// Writes `<root>/<task>/results.json` for each task.
pub fn write_task_reports(root: &Path, tasks: &[TaskReport]) -> Result<(), ReportError> {
    for t in tasks {
        let dir = root.join(&t.task);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_json(&dir.join(RESULTS_FILE), t)?;
    }
    Ok(())
}

/// Writes `suite.json` and `summary.md` under `root`.
pub fn write_suite_report(
    root: &Path,
    tasks: &[TaskReport],
    suite: &SuiteReport,
) -> Result<(), ReportError> {
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    write_json(&root.join(SUITE_FILE), suite)?;
    let path = root.join(SUMMARY_FILE);
    fs::write(&path, render_summary(tasks, suite)).map_err(|e| io_err(&path, e))
}

/// Reads every `<root>/*/results.json`, ordered by task name.
pub fn load_task_reports(root: &Path) -> Result<Vec<TaskReport>, ReportError> {
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut reports = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| io_err(root, e))?
            .path()
            .join(RESULTS_FILE);
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        reports.push(serde_json::from_str::<TaskReport>(&text).map_err(|e| io_err(&path, e))?);
    }
    if reports.is_empty() {
        return Err(ReportError::NoRuns(root.to_path_buf()));
    }
    reports.sort_by(|a, b| a.task.cmp(&b.task));
    Ok(reports)
}
