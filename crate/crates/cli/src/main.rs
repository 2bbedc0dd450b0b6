mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kernelpilot_core::agents::{
    accumulate_usage, Agents, ChatClient, CompileCommand, HttpTransport, Script, ScriptedTransport,
    Transport,
};
use kernelpilot_core::evaluation::Score;
use kernelpilot_core::pipeline::{
    profile_baselines, run_suite, Pipeline, PipelineConfig, RunState, TaskRun,
};
use kernelpilot_core::profile::{
    calibrate, classify, filter_metrics, parse_profiler_export, select_dominant, ProfileMode,
    ThresholdSet,
};
use kernelpilot_core::report::{
    build_suite_report, load_task_reports, render_summary, write_suite_report, write_task_reports,
    TaskReport, DEFAULT_TAUS,
};
use kernelpilot_core::sample::{sample_script, write_sample_suite};
use kernelpilot_core::task::{
    enumerate_suite, load_manifest, Category, Precision, SuiteFilter, TaskManifest,
};
use kernelpilot_core::toolchain::{
    baseline_shim, execute_and_filter, render_blocks, Backend, CandidateSource, CudaBackend,
    MockBackend,
};

use config::{AppConfig, BackendKind};

#[derive(Parser, Debug)]
#[command(
    name = "kernelpilot",
    version,
    about = "Profile-guided multi-agent CUDA kernel optimization"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Toolchain backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Chat model id.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Planner rounds per task.
    #[arg(long, global = true)]
    rounds: Option<u32>,
    /// Debug attempts per round.
    #[arg(long, global = true)]
    debug_rounds: Option<u32>,
    /// Profile context handed to the planner: filtered, none or full.
    #[arg(long, global = true, value_parser = parse_profile_mode)]
    profile_mode: Option<ProfileMode>,
    /// Tasks optimized concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for the mock backend.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Continue from existing checkpoints.
    #[arg(long, global = true)]
    resume: bool,
    /// Serve agent replies from a TOML script instead of an endpoint.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Directory that receives run artifacts.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Threshold file produced by `calibrate`.
    #[arg(long, global = true)]
    thresholds: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive classification thresholds from the baselines of a suite.
    Calibrate {
        suite_dir: PathBuf,
        #[arg(long, default_value = "thresholds.toml")]
        out: PathBuf,
        /// Provenance label stored with the thresholds.
        #[arg(long, default_value = "pooled")]
        corpus_id: String,
    },
    /// Classify the dominant kernel of a profiler CSV export.
    Classify { export: PathBuf },
    /// Run the optimization loop on one task.
    Optimize { task_dir: PathBuf },
    /// Compile, run and profile one candidate (the baseline by default).
    Evaluate {
        task_dir: PathBuf,
        /// Candidate source defining the optimized wrapper.
        #[arg(long)]
        candidate: Option<PathBuf>,
        /// Build command; defaults to the manifest's.
        #[arg(long)]
        command: Option<String>,
    },
    /// Optimize every task of a suite and write the aggregate report.
    RunSuite {
        suite_dir: PathBuf,
        #[arg(long, value_parser = parse_category)]
        category: Option<Category>,
        #[arg(long, value_parser = parse_precision)]
        precision: Option<Precision>,
    },
    /// Rebuild the aggregate report from a run directory.
    Report {
        run_dir: PathBuf,
        /// Comma-separated success thresholds.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Write the sample suite and a matching agent script.
    Sample { dir: PathBuf },
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_profile_mode(s: &str) -> Result<ProfileMode, String> {
    parse_enum(s)
}

fn parse_category(s: &str) -> Result<Category, String> {
    parse_enum(s)
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    parse_enum(s)
}

struct Session {
    cfg: AppConfig,
    script: Option<Script>,
    resume: bool,
}

impl Session {
    fn new(g: &GlobalArgs) -> Result<Self> {
        let mut cfg = match &g.config {
            Some(path) => AppConfig::load(path)?,
            None => AppConfig::default(),
        };
        if let Some(v) = g.backend {
            cfg.backend = v;
        }
        if let Some(v) = &g.model {
            cfg.model = v.clone();
        }
        if let Some(v) = g.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = g.debug_rounds {
            cfg.debug_rounds = v;
        }
        if let Some(v) = g.profile_mode {
            cfg.profile_mode = v;
        }
        if let Some(v) = g.workers {
            cfg.workers = v.max(1);
        }
        if let Some(v) = g.seed {
            cfg.seed = v;
        }
        if let Some(v) = &g.run_dir {
            cfg.run_dir = v.clone();
        }
        if let Some(v) = &g.thresholds {
            cfg.thresholds = Some(v.clone());
        }
        let script = g
            .script
            .as_deref()
            .map(Script::load)
            .transpose()
            .map_err(anyhow::Error::msg)?;
        Ok(Session {
            cfg,
            script,
            resume: g.resume,
        })
    }

    fn thresholds(&self) -> Result<ThresholdSet> {
        match &self.cfg.thresholds {
            Some(path) => ThresholdSet::load_or_default(path)
                .with_context(|| format!("loading {}", path.display())),
            None => Ok(ThresholdSet::default()),
        }
    }

    fn pipeline_config(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            rounds: self.cfg.rounds,
            debug_rounds: self.cfg.debug_rounds,
            profile_mode: self.cfg.profile_mode,
            thresholds: self.thresholds()?,
            model: self.cfg.model.clone(),
            seed: self.cfg.seed,
        })
    }

    fn backend(&self) -> Result<Box<dyn Backend>> {
        Ok(match self.cfg.backend {
            BackendKind::Mock => Box::new(MockBackend::new(self.cfg.seed)),
            BackendKind::Cuda => {
                let backend = CudaBackend::new(self.cfg.cuda.clone());
                backend.check_tools()?;
                Box::new(backend)
            }
        })
    }

    fn http_transport(&self) -> Result<Option<Arc<dyn Transport>>> {
        if self.script.is_some() {
            return Ok(None);
        }
        let t = HttpTransport::new(
            &self.cfg.endpoint,
            &self.cfg.api_key_env,
            Duration::from_secs(self.cfg.request_timeout_secs),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(Some(Arc::new(t)))
    }

    /// Agents for one task: scripted replies tagged for it, or the shared
    /// endpoint transport.
    fn agents(&self, shared: &Option<Arc<dyn Transport>>, task: &str) -> Agents {
        let transport: Arc<dyn Transport> = match (&self.script, shared) {
            (Some(script), _) => Arc::new(ScriptedTransport::new(script.for_task(task))),
            (None, Some(t)) => t.clone(),
            (None, None) => unreachable!("http transport is built when no script is given"),
        };
        let client = ChatClient::new(transport, self.cfg.model.clone())
            .with_temperature(self.cfg.temperature)
            .with_pricing(self.cfg.pricing())
            .with_retry(self.cfg.retry);
        Agents::new(client, self.cfg.hardware_info.clone())
    }
}

fn print_run_summary(state: &RunState) {
    let usage = accumulate_usage(&state.exchanges);
    println!("task: {}", state.task);
    println!(
        "best score P*: {:.4} (round {})",
        state.best_score, state.best_round
    );
    println!("rounds completed: {}", state.completed_rounds);
    println!(
        "agent calls: {}, prompt tokens: {}, completion tokens: {}, cost: ${:.6}",
        usage.total.calls,
        usage.total.prompt_tokens,
        usage.total.completion_tokens,
        usage.total.cost_usd
    );
    if usage.estimated_calls > 0 {
        println!(
            "({} calls used estimated token counts)",
            usage.estimated_calls
        );
    }
}

fn cmd_calibrate(ctx: &Session, suite_dir: &Path, out: &Path, corpus_id: &str) -> Result<ExitCode> {
    let suite = enumerate_suite(suite_dir, &SuiteFilter::default())?;
    let backend = ctx.backend()?;
    let scratch = ctx.cfg.run_dir.join("calibration");
    let mut reports = Vec::new();
    for (task, result) in
        profile_baselines(&suite.tasks, backend.as_ref(), &scratch, ctx.cfg.workers)
    {
        match result {
            Ok(r) => reports.push(r),
            Err(e) => tracing::warn!(%task, "skipping baseline: {e}"),
        }
    }
    let set = calibrate(&reports, corpus_id)?;
    fs::write(out, set.to_toml()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "compute_t = {:.4}, dram_t = {:.4}, mem_t = {:.4} from {} baselines -> {}",
        set.compute_t,
        set.dram_t,
        set.mem_t,
        reports.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(ctx: &Session, export: &Path) -> Result<ExitCode> {
    let text =
        fs::read_to_string(export).with_context(|| format!("reading {}", export.display()))?;
    let report = select_dominant(parse_profiler_export(&text)?)
        .context("export contains no kernel launches")?;
    let class = classify(&report, &ctx.thresholds()?);
    let filtered = filter_metrics(&report, class);
    println!("{}", serde_json::to_string_pretty(&filtered)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_optimize(ctx: &Session, task_dir: &Path) -> Result<ExitCode> {
    let manifest = load_manifest(task_dir)?;
    let config = ctx.pipeline_config()?;
    let backend = ctx.backend()?;
    let shared = ctx.http_transport()?;
    let agents = ctx.agents(&shared, &manifest.name);
    let task_root = ctx.cfg.run_dir.join(&manifest.name);
    let result =
        Pipeline::new(&manifest, &config, &agents, backend.as_ref(), &task_root).run(ctx.resume);
    let run = TaskRun {
        manifest,
        result: result.as_ref().map(Clone::clone).map_err(|e| e.to_string()),
    };
    write_task_reports(&ctx.cfg.run_dir, &[TaskReport::from_run(&run)])?;
    let state = result?;
    print_run_summary(&state);
    Ok(if state.best_score > 1.0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_evaluate(
    ctx: &Session,
    task_dir: &Path,
    candidate: Option<&Path>,
    command: Option<&str>,
) -> Result<ExitCode> {
    let manifest: TaskManifest = load_manifest(task_dir)?;
    let code = match candidate {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => baseline_shim(&manifest),
    };
    let command = CompileCommand::parse(command.unwrap_or(&manifest.baseline_compile_command))?;
    let backend = ctx.backend()?;
    let workdir = ctx.cfg.run_dir.join(&manifest.name).join("evaluate");
    let outcome = execute_and_filter(
        backend.as_ref(),
        &manifest,
        &CandidateSource {
            workdir: &workdir,
            code: &code,
            command: &command,
        },
        &ctx.thresholds()?,
        ctx.cfg.profile_mode,
    );
    let score = Score::from_outcome(&outcome, &manifest);
    print!("{}", render_blocks(&outcome.size_results));
    for f in &outcome.filtered_profiles {
        println!("{}: {}", f.size_label, f.class);
    }
    if score.valid {
        println!("valid, P = {:.4}", score.p);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("invalid: {}", outcome.failure_log.trim_end());
        Ok(ExitCode::from(2))
    }
}

fn write_report(root: &Path, reports: &[TaskReport], taus: &[f64]) -> Result<()> {
    let suite = build_suite_report(reports, taus)?;
    write_suite_report(root, reports, &suite)?;
    print!("{}", render_summary(reports, &suite));
    Ok(())
}

fn cmd_run_suite(ctx: &Session, suite_dir: &Path, filter: SuiteFilter) -> Result<ExitCode> {
    let suite = enumerate_suite(suite_dir, &filter)?;
    for (path, e) in &suite.errors {
        tracing::warn!(path = %path.display(), "skipping task: {e}");
    }
    let config = ctx.pipeline_config()?;
    let backend = ctx.backend()?;
    let shared = ctx.http_transport()?;
    let agents_for = |m: &TaskManifest| ctx.agents(&shared, &m.name);
    let run = run_suite(
        &suite.tasks,
        &config,
        backend.as_ref(),
        &agents_for,
        &ctx.cfg.run_dir,
        ctx.cfg.workers,
        ctx.resume,
    );
    let reports: Vec<TaskReport> = run.tasks.iter().map(TaskReport::from_run).collect();
    write_task_reports(&ctx.cfg.run_dir, &reports)?;
    write_report(&ctx.cfg.run_dir, &reports, &DEFAULT_TAUS)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(run_dir: &Path, taus: Option<Vec<f64>>) -> Result<ExitCode> {
    let reports = load_task_reports(run_dir)?;
    let taus = taus.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
    write_report(run_dir, &reports, &taus)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(dir: &Path) -> Result<ExitCode> {
    let manifests = write_sample_suite(dir)?;
    let script_path = dir.join("script.toml");
    fs::write(&script_path, sample_script(&manifests).to_toml())
        .with_context(|| format!("writing {}", script_path.display()))?;
    println!(
        "wrote {} tasks and {}",
        manifests.len(),
        script_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ctx = Session::new(&cli.global)?;
    match cli.command {
        Command::Calibrate {
            suite_dir,
            out,
            corpus_id,
        } => cmd_calibrate(&ctx, &suite_dir, &out, &corpus_id),
        Command::Classify { export } => cmd_classify(&ctx, &export),
        Command::Optimize { task_dir } => cmd_optimize(&ctx, &task_dir),
        Command::Evaluate {
            task_dir,
            candidate,
            command,
        } => cmd_evaluate(&ctx, &task_dir, candidate.as_deref(), command.as_deref()),
        Command::RunSuite {
            suite_dir,
            category,
            precision,
        } => cmd_run_suite(
            &ctx,
            &suite_dir,
            SuiteFilter {
                category,
                precision,
            },
        ),
        Command::Report { run_dir, taus } => cmd_report(&run_dir, taus),
        Command::Sample { dir } => cmd_sample(&dir),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
