use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--train-len", "80", "--horizon", "10", "--t-s", "10", "--n-b", "2", "--n-e", "2", "--seed", "3"];

fn kpin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpin"))
        .args(args)
        .args(SMALL)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(kpin(&["generate"], out));
    let replay = out.join("replay_seed3.bin");
    assert!(replay.exists());
    let replay = replay.to_str().unwrap();
    ok(kpin(&["fit", "--replay", replay], out));
    let model = out.join("model_seed3.json");
    assert!(model.exists());
    ok(kpin(&["train", "--replay", replay], out));
    let ckpt = out.join("kpin_seed3.ckpt");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(out.join("kpin_seed3_training.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    ok(kpin(
        &["test", "--replay", replay, "--checkpoint", ckpt.to_str().unwrap(), "--model", model.to_str().unwrap()],
        out,
    ));
    let trace = std::fs::read_to_string(out.join("trace_seed3.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    assert!(out.join("test_seed3.csv").exists());
    assert!(out.join("test_seed3.json").exists());
}

#[test]
fn run_writes_reports_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    ok(kpin(&["run", "--methods", "AR,ARKF"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("reports.json").exists());
    ok(kpin(&["run", "--methods", "AR", "--format", "json"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert!(v.is_object());
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpin(&["ablate", "no_such_sweep"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_sweep"));
    let o = kpin(&["run", "--n-b", "50"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = kpin(&["test", "--checkpoint", "/nonexistent.ckpt"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "[array]\nn_rx = 2\n[run]\nmethods = [\"AR\"]\n").unwrap();
    ok(kpin(&["run", "--config", cfg.to_str().unwrap()], dir.path()));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["array"]["n_rx"], 2);
    assert_eq!(json["config"]["data"]["train_len"], 80);
    assert_eq!(json["reports"].as_array().unwrap().len(), 1);
}
