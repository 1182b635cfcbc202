use std::path::Path;

use seqmargin::cli_main;
use seqmargin::config::ExperimentConfig;
use seqmargin::experiment::execute;
use seqmargin::trace::TRACE_HEADER;
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["seqmargin"];
    argv.extend_from_slice(args);
    cli_main(argv)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn margin_prints_span_direction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["margin", "span", "--out", out, "--quiet"]), 0);
    let v = read_json(&dir.path().join("margin/summary.json"));
    let d: Vec<f64> = serde_json::from_value(v["direction"].clone()).unwrap();
    assert!((d[0] - 1.0).abs() < 1e-9 && d[1].abs() < 1e-9 && d[2].abs() < 1e-9);
    assert!((v["phi"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn margin_of_single_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("point.txt");
    std::fs::write(&data, "2 1 1\n0 1 2 0\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(&["margin", data.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let v = read_json(&out.join("margin/summary.json"));
    assert_eq!(v["phi"].as_f64().unwrap(), 2.0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["margin", "no-such-dataset"]), 2);
    assert_eq!(run(&["verify", "no-such-suite"]), 2);
    assert_eq!(run(&["train"]), 2);
    assert_eq!(run(&["--help"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad",
        r#"{"name": "x", "dataset": "span", "train": {"algorithm": "seqgd", "k": 1, "eta": 0.1, "horizon": {"cycles": 1}}, "extra": 1}"#,
    );
    assert_eq!(run(&["train", &cfg]), 2);
}

#[test]
fn train_above_guard_with_bound_check_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "hot",
        r#"{"name": "hot", "dataset": "pair-contradicting", "checks": ["loss"],
            "train": {"algorithm": "seqgd", "k": 10, "eta": 0.5, "horizon": {"cycles": 5}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["train", &cfg, "--out", out.to_str().unwrap(), "--quiet"]), 2);
    assert!(!out.join("hot").exists());
}

#[test]
fn train_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pair",
        r#"{"name": "pair", "dataset": "pair-contradicting", "checks": ["loss", "forgetting"],
            "metrics": ["loss_joint", "loss_task", "forget_cycle", "bound_loss", "bound_forget_lo", "bound_forget_hi"],
            "train": {"algorithm": "seqgd", "k": 10, "eta": "auto:0.9", "guard": "cyclic", "horizon": {"cycles": 20}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["train", &cfg, "--out", out.to_str().unwrap(), "--quiet"]), 0);
    let trace = std::fs::read_to_string(out.join("pair/trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), TRACE_HEADER);
    assert!(trace.lines().any(|l| l.contains(",bound_loss,")));
    let v = read_json(&out.join("pair/summary.json"));
    assert_eq!(v["failed_checks"], 0);
    assert_eq!(v["checks"][0]["violations"], 0);
    assert_eq!(v["checks"].as_array().unwrap().len(), 3);

    // a second invocation produces the same bytes
    let again = dir.path().join("again");
    assert_eq!(run(&["train", &cfg, "--out", again.to_str().unwrap(), "--quiet"]), 0);
    assert_eq!(std::fs::read(out.join("pair/trace.csv")).unwrap(), std::fs::read(again.join("pair/trace.csv")).unwrap());
}

#[test]
fn one_stage_two_metrics_gives_two_rows() {
    let cfg = ExperimentConfig::parse(
        r#"{"name": "one", "dataset": "span", "metrics": ["loss_joint", "norm_w"],
            "train": {"algorithm": "seqgd", "k": 1, "eta": 0.1, "horizon": {"stages": 1}}}"#,
        Path::new("one.json"),
    )
    .unwrap();
    let out = execute(&cfg).unwrap();
    assert_eq!(out.trace_text().lines().count(), 3);
    let empty = ExperimentConfig::parse(
        r#"{"name": "zero", "dataset": "span", "train": {"algorithm": "seqgd", "k": 1, "eta": 0.1, "horizon": {"stages": 0}}}"#,
        Path::new("zero.json"),
    )
    .unwrap();
    assert_eq!(execute(&empty).unwrap().trace_text(), format!("{TRACE_HEADER}\n"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rnd",
        r#"{"name": "rnd", "dataset": "planar", "metrics": ["loss_joint", "angle_sine"],
            "train": {"algorithm": "seqgd", "k": 5, "eta": 1e-4, "horizon": {"stages": 12}, "schedule": {"kind": "random", "seed": 1}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["train", &cfg, "--out", out.to_str().unwrap(), "--seed", "8", "--quiet"]), 0);
    let summary = read_json(&out.join("rnd/summary.json"));
    let echo: ExperimentConfig = serde_json::from_value(summary["config"].clone()).unwrap();
    assert_eq!(echo.dataset, "planar:seed=8");
    let replay = execute(&echo).unwrap();
    assert_eq!(replay.trace_text(), std::fs::read_to_string(out.join("rnd/trace.csv")).unwrap());
}

#[test]
fn smm_and_nonsep_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "smm",
        r#"{"name": "smm", "dataset": "span", "train": {"algorithm": "smm", "k": 1, "eta": 1.0, "horizon": {"cycles": 10}}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["smm", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]), 0);
    let v = read_json(&out.join("smm/summary.json"));
    let w: Vec<f64> = serde_json::from_value(v["final_w"].clone()).unwrap();
    assert!((w[0] - 12.0 / 11.0).abs() < 1e-4);
    // the projection baseline is not a train algorithm
    assert_eq!(run(&["train", &cfg, "--out", out.to_str().unwrap(), "--quiet"]), 2);

    assert_eq!(run(&["nonsep-cert", "nonsep", "--k", "10", "--out", out.to_str().unwrap()]), 0);
    let v = read_json(&out.join("nonsep-cert/summary.json"));
    assert!(v["certificate"]["grad_norm_at_w_star"].as_f64().unwrap() < 1e-12);
    assert_eq!(run(&["nonsep-cert", "span", "--quiet"]), 2);
}

#[test]
fn nonsep_check_reports_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ns",
        r#"{"name": "ns", "dataset": "nonsep", "checks": ["distance"], "metrics": ["dist_wstar_sq", "bound_dist"],
            "train": {"algorithm": "seqgd", "k": 10, "eta": "auto:1.0", "guard": "nonsep", "horizon": {"cycles": 50}}}"#,
    );
    let out = dir.path().join("out");
    let code = run(&["train", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    let v = read_json(&out.join("ns/summary.json"));
    let report = &v["checks"][0];
    assert_eq!(report["name"], "distance");
    assert!(report["constants"]["minimal_constant"].as_f64().unwrap() > 0.0);
    assert_eq!(code, if report["violations"] == 0 { 0 } else { 1 });
}

#[test]
fn gen_data_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("planar.txt");
    assert_eq!(run(&["gen-data", "planar:seed=5", path.to_str().unwrap(), "--quiet"]), 0);
    let ds = seqmargin_core::data::load_dataset::<f64>(&path).unwrap();
    assert_eq!((ds.len(), ds.num_tasks()), (300, 3));
    assert_eq!(run(&["gen-data", "planar:seed=5,resample=true", path.to_str().unwrap()]), 2);
}

#[test]
fn verify_single_suite() {
    assert_eq!(run(&["verify", "loss-bound", "--quiet"]), 0);
    assert_eq!(run(&["verify", "1", "--quiet"]), 0);
}
