//! End-to-end checks of the binary: artifacts, reproducibility, exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoi-probe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name} from {}: {e}", dir.display()))
}

#[test]
fn solve_writes_documented_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let output = run(&[
        "solve",
        "--preset",
        "fig2",
        "--t-max",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    assert!(read(&out, "values.csv").starts_with("E,T,action,J,V\n"));
    assert!(read(&out, "probe_thresholds.csv").starts_with("E,T_th,truncation_affected\n"));
    assert!(read(&out, "sample_thresholds.csv").starts_with("E,T,p_th,truncation_affected\n"));
    assert!(read(&out, "error_trace.csv").starts_with("iteration,sup_norm_error\n"));

    let meta: serde_json::Value = serde_json::from_str(&read(&out, "metadata.json")).unwrap();
    assert_eq!(meta["command"], "solve");
    assert_eq!(meta["preset"], "fig2");
    assert_eq!(meta["resolved_config"]["system"]["age_cap"], 10);
    assert_eq!(meta["overrides"]["t_max"], 10);
    assert!(meta["extra"]["iterations"].as_u64().unwrap() > 0);
}

#[test]
fn identical_runs_produce_byte_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let output = run(&[
            "simulate",
            "--preset",
            "fig2",
            "--t-max",
            "8",
            "--horizon",
            "20000",
            "--seeds",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    assert_eq!(read(&a, "per_seed.csv"), read(&b, "per_seed.csv"));
    assert_eq!(read(&a, "eval_report.json"), read(&b, "eval_report.json"));
    // Metadata may differ only in the timestamp line.
    let strip = |s: String| {
        s.lines()
            .filter(|l| !l.contains("timestamp_unix"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(read(&a, "metadata.json")),
        strip(read(&b, "metadata.json"))
    );
}

#[test]
fn missing_spec_is_a_config_error() {
    let output = run(&["solve", "--out", "/tmp/unused_aoi_probe"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
            [system]
            buffer_capacity = 1
            probe_cost = 1
            sample_cost = 1
            num_processes = 1
            discount = 0.95
            age_cap = 10

            [channel]
            success_probs = [0.9]
            occurrence_probs = [1.0]

            [energy]
            bernoulli_lambda = 0.4
        "#,
    )
    .unwrap();
    let output = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        output.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn oversized_grid_exits_with_budget_code() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(&[
        "solve-multi",
        "--preset",
        "fig2",
        "--t-max",
        "50",
        "--processes",
        "4",
        "--cell-budget",
        "1000",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        output.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn learn_emits_curves_reference_and_resumable_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("learn");
    let output = run(&[
        "learn",
        "--preset",
        "fig6",
        "--seeds",
        "2",
        "--horizon",
        "20000",
        "--eval-horizon",
        "20000",
        "--eval-seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    for k in 0..2 {
        let curve = read(&out, &format!("learning_curve_seed{k}.csv"));
        assert!(curve.starts_with("slot,window_aoi,epsilon,mean_step_size\n"));
        // 20000 slots at one point per 1000.
        assert_eq!(curve.lines().count(), 1 + 20);
    }
    let reference = read(&out, "reference.csv");
    assert!(reference.starts_with("policy,aoi,ci_half_width,horizon\n"));
    assert!(reference.contains("value_iteration"));
    assert!(reference.contains("uniform_random"));
    assert!(reference.contains("greedy_from_q_seed1"));

    // Tables round-trip through the resume path.
    let q = out.join("qtables_seed0.json");
    assert!(q.exists());
    let resumed = run(&[
        "learn",
        "--preset",
        "fig6",
        "--seeds",
        "1",
        "--horizon",
        "5000",
        "--eval-horizon",
        "10000",
        "--eval-seeds",
        "2",
        "--resume-from",
        q.to_str().unwrap(),
        "--out",
        tmp.path().join("resume").to_str().unwrap(),
    ]);
    assert!(
        resumed.status.success(),
        "{}",
        String::from_utf8_lossy(&resumed.stderr)
    );
}

#[test]
fn learn_markov_variant_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("learnm");
    let output = run(&[
        "learn",
        "--preset",
        "fig6",
        "--model",
        "markov",
        "--seeds",
        "1",
        "--horizon",
        "15000",
        "--eval-horizon",
        "10000",
        "--eval-seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let meta: serde_json::Value = serde_json::from_str(&read(&out, "metadata.json")).unwrap();
    assert!(meta["resolved_config"]["channel"]["transition_matrix"].is_array());
}

#[test]
fn compare_probing_covers_requested_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let output = run(&[
        "compare-probing",
        "--preset",
        "fig5",
        "--lambdas",
        "0.4,0.6",
        "--cost-pairs",
        "1:1,1:5",
        "--horizon",
        "10000",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let table = read(&out, "comparison.csv");
    assert!(table.starts_with(
        "lambda,E_p,E_s,aoi_probing,ci_probing,aoi_no_probing,ci_no_probing,difference\n"
    ));
    assert_eq!(table.lines().count(), 1 + 4);
}

#[test]
fn sweep_emits_combined_and_gnuplot_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let output = run(&[
        "sweep",
        "--preset",
        "fig2",
        "--t-max",
        "8",
        "--lambdas",
        "0.4,0.6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let probe = read(&out, "probe_thresholds_sweep.csv");
    assert!(probe.starts_with("lambda,E,T_th,truncation_affected\n"));
    assert!(out.join("probe_thresholds_lambda0.4.dat").exists());
    assert!(out.join("probe_thresholds_lambda0.6.dat").exists());
}

#[test]
fn config_file_round_trips_through_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
            [system]
            buffer_capacity = 6
            probe_cost = 1
            sample_cost = 1
            num_processes = 1
            discount = 0.9
            age_cap = 8

            [channel]
            success_probs = [0.9, 0.4]
            occurrence_probs = [0.5, 0.5]

            [energy]
            bernoulli_lambda = 0.5
        "#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let output = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let meta: serde_json::Value = serde_json::from_str(&read(&out, "metadata.json")).unwrap();
    assert_eq!(meta["resolved_config"]["system"]["buffer_capacity"], 6);
    assert_eq!(meta["preset"], serde_json::Value::Null);
}
