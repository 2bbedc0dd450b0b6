use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kernelpilot_core::agents::Script;
use kernelpilot_core::sample::{scripted_rounds, write_sample_suite, Trial};
use kernelpilot_core::task::TaskManifest;

fn kp(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelpilot"))
        .current_dir(cwd)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn suite(dir: &Path) -> Vec<TaskManifest> {
    write_sample_suite(&dir.join("suite")).unwrap()
}

fn write_script(dir: &Path, manifest: &TaskManifest, rounds: &[Vec<Trial>]) -> String {
    let path = dir.join(format!("{}.toml", manifest.name));
    fs::write(&path, scripted_rounds(manifest, rounds).to_toml()).unwrap();
    path.to_string_lossy().into_owned()
}

fn speedups(values: &[&[f64]]) -> Vec<Vec<Trial>> {
    values
        .iter()
        .map(|r| {
            r.iter()
                .map(|&s| {
                    if s == 0.0 {
                        Trial::CompileFail
                    } else {
                        Trial::Speedup(s)
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn help_lists_every_flag_and_command() {
    let dir = tempfile::tempdir().unwrap();
    let help = stdout(&kp(dir.path(), &["--help"]));
    for flag in [
        "--config",
        "--backend",
        "--model",
        "--rounds",
        "--debug-rounds",
        "--profile-mode",
        "--workers",
        "--seed",
        "--resume",
        "--script",
        "--run-dir",
    ] {
        assert!(help.contains(flag), "missing {flag}:\n{help}");
    }
    for cmd in [
        "calibrate",
        "classify",
        "optimize",
        "evaluate",
        "run-suite",
        "report",
    ] {
        assert!(help.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn optimize_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let m = suite(dir.path())
        .into_iter()
        .find(|m| m.name == "matrix_mul")
        .unwrap();
    let task = m.root.to_string_lossy().into_owned();

    let gain = write_script(dir.path(), &m, &speedups(&[&[1.5], &[1.2], &[2.0]]));
    let o = kp(
        dir.path(),
        &["--script", &gain, "--run-dir", "a", "optimize", &task],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("best score P*: 2.0000 (round 3)"));
    assert!(dir.path().join("a/matrix_mul/results.json").is_file());

    let never = write_script(
        dir.path(),
        &m,
        &speedups(&[&[0.0, 0.0, 0.0, 0.0], &[0.9], &[0.0, 0.0, 0.0, 0.0]]),
    );
    let o = kp(
        dir.path(),
        &["--script", &never, "--run-dir", "b", "optimize", &task],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("best score P*: 1.0000 (round 0)"));

    // Debug rescue in round 1 is out of reach with a single run.
    let rescue = write_script(
        dir.path(),
        &m,
        &speedups(&[&[0.0, 0.0, 1.5], &[1.3], &[0.0, 2.0]]),
    );
    let o = kp(
        dir.path(),
        &[
            "--script",
            &rescue,
            "--run-dir",
            "c",
            "--rounds",
            "1",
            "--debug-rounds",
            "0",
            "optimize",
            &task,
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("agent calls: 3"));
}

#[test]
fn optimize_with_broken_baseline_fails() {
    let dir = tempfile::tempdir().unwrap();
    let m = suite(dir.path())
        .into_iter()
        .find(|m| m.name == "dot_product")
        .unwrap();
    let manifest = m.root.join("manifest.toml");
    let text = fs::read_to_string(&manifest)
        .unwrap()
        .replace("nvcc -O3", "clang++ -O3");
    fs::write(&manifest, text).unwrap();
    let script = write_script(dir.path(), &m, &speedups(&[&[1.5]]));
    let o = kp(
        dir.path(),
        &["--script", &script, "optimize", &m.root.to_string_lossy()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("baseline of dot_product is not valid"));
}

#[test]
fn sample_run_suite_and_report_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    assert!(kp(dir.path(), &["sample", "demo"]).status.success());
    let mut aggregates = Vec::new();
    for (run, workers) in [("r1", "1"), ("r2", "4")] {
        let o = kp(
            dir.path(),
            &[
                "--script",
                "demo/script.toml",
                "--run-dir",
                run,
                "--workers",
                workers,
                "--seed",
                "9",
                "run-suite",
                "demo",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("5 tasks, 0 failed."));
        aggregates.push(fs::read(dir.path().join(run).join("suite.json")).unwrap());
    }
    assert_eq!(aggregates[0], aggregates[1]);

    let o = kp(dir.path(), &["report", "r1", "--taus", "0,1,2"]);
    assert!(o.status.success());
    let suite: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("r1/suite.json")).unwrap()).unwrap();
    assert_eq!(
        suite["success_curve"]["taus"],
        serde_json::json!([0.0, 1.0, 2.0])
    );
    assert!(dir.path().join("r1/summary.md").is_file());
}

#[test]
fn report_marks_migration_unavailable_without_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = suite(dir.path());
    let mut script = Script::default();
    for m in &manifests {
        script
            .entries
            .extend(scripted_rounds(m, &speedups(&[&[1.5]])).entries);
    }
    fs::write(dir.path().join("s.toml"), script.to_toml()).unwrap();
    let o = kp(
        dir.path(),
        &[
            "--script",
            "s.toml",
            "--rounds",
            "1",
            "--profile-mode",
            "none",
            "--run-dir",
            "runs",
            "run-suite",
            "suite",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = kp(dir.path(), &["report", "runs"]);
    assert!(stdout(&o).contains("Unavailable: some runs carry no profiles."));
}

#[test]
fn report_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = kp(dir.path(), &["report", "."]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no task results found"));
}

#[test]
fn calibrate_is_repeatable_and_rejects_empty_suites() {
    let dir = tempfile::tempdir().unwrap();
    suite(dir.path());
    for out in ["t1.toml", "t2.toml"] {
        let o = kp(dir.path(), &["calibrate", "suite", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let t1 = fs::read_to_string(dir.path().join("t1.toml")).unwrap();
    assert_eq!(t1, fs::read_to_string(dir.path().join("t2.toml")).unwrap());
    assert!(t1.contains("corpus = \"pooled\""));

    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = kp(dir.path(), &["calibrate", "empty"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn classify_export() {
    let dir = tempfile::tempdir().unwrap();
    let export = "\
==PROF== Connected to process 1 (app)
\"ID\",\"Kernel Name\",\"Section Name\",\"Metric Name\",\"Metric Unit\",\"Metric Value\"
\"0\",\"gemm\",\"GPU Speed Of Light Throughput\",\"Compute (SM) Throughput\",\"%\",\"12.0\"
\"0\",\"gemm\",\"GPU Speed Of Light Throughput\",\"DRAM Throughput\",\"%\",\"71.5\"
\"0\",\"gemm\",\"GPU Speed Of Light Throughput\",\"Memory Throughput\",\"%\",\"74.0\"
\"0\",\"gemm\",\"GPU Speed Of Light Throughput\",\"Duration\",\"usecond\",\"1,250\"
";
    fs::write(dir.path().join("e.csv"), export).unwrap();
    let o = kp(dir.path(), &["classify", "e.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kernel_name"], "gemm");
    assert_eq!(v["kept_metrics"][0]["value"], 71.5);
}

#[test]
fn evaluate_candidate_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let m = suite(dir.path())
        .into_iter()
        .find(|m| m.name == "spmv_csr")
        .unwrap();
    let task = m.root.to_string_lossy().into_owned();
    let o = kp(dir.path(), &["evaluate", &task]);
    assert!(stdout(&o).contains("valid, P = 1.0000"));

    fs::write(
        dir.path().join("cand.cu"),
        "// @mock mismatch=1\n__global__ void spmv_csr_kernel_optimized() {}\n",
    )
    .unwrap();
    let o = kp(dir.path(), &["evaluate", &task, "--candidate", "cand.cu"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("invalid: Execution result error:"));
}
