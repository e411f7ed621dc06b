//! End-to-end checks of the command-line surface: exit codes, file formats,
//! and reproducibility of result bodies.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tandemscale"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_trace(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut full = args.to_vec();
    full.push("-o");
    full.push(&path);
    let out = run(&full);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn gen_trace_batch_writes_pinned_format() {
    let dir = TempDir::new().unwrap();
    let path = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "10", "--k", "3"],
    );
    let body = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "{\"K\":3}");
    assert!(lines[1..].iter().all(|l| *l == "{\"t\":0.0}"));
}

#[test]
fn gen_trace_poisson_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = write_trace(
        dir.path(),
        "a.jsonl",
        &[
            "gen-trace",
            "poisson",
            "--rate",
            "2",
            "--horizon",
            "50",
            "--seed",
            "1",
            "--k",
            "2",
        ],
    );
    let b = write_trace(
        dir.path(),
        "b.jsonl",
        &[
            "gen-trace",
            "poisson",
            "--rate",
            "2",
            "--horizon",
            "50",
            "--seed",
            "1",
            "--k",
            "2",
        ],
    );
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must produce identical files"
    );
}

#[test]
fn gen_trace_missing_k_usage_error() {
    let out = run(&["gen-trace", "batch", "--n", "10", "-o", "/tmp/never.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_single_job_two_servers() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "1", "--k", "2"],
    );
    let out = run(&["simulate", &trace, "--policy", "proposed", "--power", "1,2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let data_line = text.lines().last().unwrap();
    let total: f64 = data_line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((total - 3.0 * 2f64.sqrt()).abs() < 1e-9, "total {total}");

    // A lone job never queues, so the autonomous baseline coincides.
    let auto = run(&["simulate", &trace, "--policy", "autonomous"]);
    let text = stdout(&auto);
    let total_auto: f64 = text
        .lines()
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((total_auto - total).abs() < 1e-9);
}

#[test]
fn simulate_unknown_policy_usage_error() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "1", "--k", "2"],
    );
    let out = run(&["simulate", &trace, "--policy", "fastest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_trajectory_and_costs() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "3", "--k", "2"],
    );
    let costs = dir.path().join("costs.csv");
    let traj = dir.path().join("traj.json");
    let out = run(&[
        "simulate",
        &trace,
        "--policy",
        "replication",
        "--out-costs",
        costs.to_str().unwrap(),
        "--out-trajectory",
        traj.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let costs_body = std::fs::read_to_string(&costs).unwrap();
    assert!(costs_body.starts_with("# manifest: "));
    assert!(costs_body.contains("replication"));
    let traj_body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&traj).unwrap()).unwrap();
    assert_eq!(traj_body["result"]["servers"], 2);
    assert!(traj_body["result"]["events"].as_array().unwrap().len() >= 9);
    assert_eq!(traj_body["manifest"]["subcommand"], "simulate");
}

#[test]
fn audit_passes_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "5", "--k", "3"],
    );
    let out = run(&["audit", &trace]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["result"]["pass"], true);
    assert_eq!(report["result"]["violations"], 0);

    let again = run(&["audit", &trace]);
    assert_eq!(
        out.stdout, again.stdout,
        "identical manifest, identical body"
    );
}

#[test]
fn audit_tiny_charge_fails_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "8", "--k", "2"],
    );
    let out = run(&["audit", &trace, "--c", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["result"]["pass"], false);
    let violations = report["result"]["violations"].as_u64().unwrap();
    assert!(violations > 0);
}

#[test]
fn audit_empty_trace_vacuous_pass() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "0", "--k", "2"],
    );
    let out = run(&["audit", &trace]);
    assert!(out.status.success());
}

#[test]
fn optbound_reports_both_bounds() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(
        dir.path(),
        "t.jsonl",
        &["gen-trace", "batch", "--n", "1", "--k", "2"],
    );
    let out = run(&["optbound", &trace]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let closed = report["result"]["closed_form_lb"].as_f64().unwrap();
    let opt_e = report["result"]["opt_e_cost"].as_f64().unwrap();
    assert!((closed - 4.0).abs() < 1e-9);
    assert!((opt_e - 2.0 * 2f64.sqrt()).abs() < 1e-4);
}

#[test]
fn stochastic_single_layer_report() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("net.json");
    std::fs::write(
        &cfg,
        r#"{"lambda": 1.0, "layers": [{"m": 1, "mu": 1.0, "c": 1.0, "alpha": 2.0}]}"#,
    )
    .unwrap();
    let csv_path = dir.path().join("layers.csv");
    let out = run(&[
        "stochastic",
        cfg.to_str().unwrap(),
        "--horizon",
        "20000",
        "--seed",
        "5",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let layer = &report["result"]["layers"][0];
    assert_eq!(layer["closed_form"], 3.0);
    assert_eq!(layer["certificate"], 3.0);
    let sim = layer["sim_cost"].as_f64().unwrap();
    assert!((sim - 3.0).abs() / 3.0 < 0.05, "sim {sim}");
    let csv_body = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv_body.starts_with("# manifest: "));
    assert!(csv_body.lines().nth(1).unwrap().starts_with("layer,"));
}

#[test]
fn stochastic_invalid_alpha_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("net.json");
    std::fs::write(
        &cfg,
        r#"{"lambda": 1.0, "layers": [{"m": 1, "mu": 1.0, "c": 1.0, "alpha": 0.9}]}"#,
    )
    .unwrap();
    let out = run(&["stochastic", cfg.to_str().unwrap(), "--horizon", "100"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_grid_has_nonnegative_slack() {
    let out = run(&[
        "sweep",
        "--n-list",
        "1,4,9",
        "--k-list",
        "1,2",
        "--patterns",
        "batch,poisson",
        "--policies",
        "proposed",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let slack: f64 = fields.last().unwrap().parse().unwrap();
        assert!(slack >= 0.0, "row {line} has negative slack");
        rows += 1;
    }
    assert_eq!(rows, 3 * 2 * 2);
}

#[test]
fn sweep_separates_baselines_on_batch() {
    let out = run(&[
        "sweep",
        "--n-list",
        "64",
        "--k-list",
        "2",
        "--patterns",
        "batch",
        "--policies",
        "proposed,autonomous",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut totals = std::collections::HashMap::new();
    for line in text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        totals.insert(fields[3].to_string(), fields[7].parse::<f64>().unwrap());
    }
    assert!(totals["autonomous"] > totals["proposed"]);
}

#[test]
fn sweep_empty_grid_header_only() {
    let out = run(&["sweep", "--n-list", "", "--k-list", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# manifest: "));
    assert!(lines[1].starts_with("pattern,"));
}

#[test]
fn sweep_deterministic_under_thread_cap() {
    let args = [
        "sweep",
        "--n-list",
        "2,5",
        "--k-list",
        "1,2",
        "--patterns",
        "poisson",
        "--policies",
        "proposed,replication",
        "--seed",
        "11",
    ];
    let a = bin()
        .args(args)
        .env("TANDEMSCALE_THREADS", "1")
        .output()
        .unwrap();
    let b = bin()
        .args(args)
        .env("TANDEMSCALE_THREADS", "4")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        a.stdout, b.stdout,
        "row order must not depend on parallelism"
    );
}
