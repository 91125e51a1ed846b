//! End-to-end tests of the chi-forge binary: exit codes, artifacts, and
//! output-directory resolution.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chi-forge"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("CHI_FORGE_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_at(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Reference parameters as a config document, with optional overrides
/// spliced in before serialization.
fn config_json(update: impl FnOnce(&mut serde_json::Value)) -> serde_json::Value {
    let mut v = serde_json::json!({
        "params": {
            "drives": [
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 1.0, "detuning1": 10.0},
                {"rabi": 0.725, "detuning1": 10.5},
                {"rabi": 0.725, "detuning1": 10.5}
            ],
            "detuning2": 11.0,
            "omega_s": 10.0,
            "fock_dim": 5
        }
    });
    update(&mut v);
    v
}

fn write_config(dir: &Path, v: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

#[test]
fn run_with_reference_defaults_hits_unit_fidelity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["run", "--paper-defaults", "--out", "art"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("fidelity to chi target: 1.000000"));
    let doc = json_at(&tmp.path().join("art/run.json"));
    assert!((doc["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(doc["engine"], "analytic");
    assert_eq!(doc["amplitudes_order_1234"].as_array().unwrap().len(), 16);
}

#[test]
fn mismatched_pair_couplings_exit_with_physics_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        v["params"]["drives"][2]["rabi"] = serde_json::json!(0.5);
        v["params"]["drives"][3]["rabi"] = serde_json::json!(0.5);
    });
    let path = write_config(tmp.path(), &cfg);
    let out = run_in(tmp.path(), &["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("pair couplings differ"));
}

#[test]
fn invalid_fock_dimension_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        v["params"]["fock_dim"] = serde_json::json!(1);
    });
    let path = write_config(tmp.path(), &cfg);
    let out = run_in(tmp.path(), &["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn config_and_defaults_flags_are_mutually_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &config_json(|_| {}));
    let out = run_in(
        tmp.path(),
        &["run", "--config", path.to_str().unwrap(), "--paper-defaults"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mutually exclusive"));
}

#[test]
fn unknown_engine_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["run", "--paper-defaults", "--engine", "psychic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown engine"));
}

#[test]
fn validate_passes_at_reference_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["validate", "--paper-defaults"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("all conditions pass"));
}

#[test]
fn validate_fails_when_scales_collapse() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        // drive as strong as its detuning: no separation of scales
        v["params"]["drives"][0]["rabi"] = serde_json::json!(10.0);
        v["params"]["drives"][1]["rabi"] = serde_json::json!(10.0);
    });
    let path = write_config(tmp.path(), &cfg);
    let out = run_in(tmp.path(), &["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn validate_fails_under_an_unreachable_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        v["regime_threshold"] = serde_json::json!(1000.0);
    });
    let path = write_config(tmp.path(), &cfg);
    let out = run_in(tmp.path(), &["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_emits_both_models_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        v["sweep_n1"] = serde_json::json!({"min": -0.04, "max": 0.04, "count": 5});
        v["sweep_n2"] = serde_json::json!({"min": -0.04, "max": 0.04, "count": 5});
    });
    let path = write_config(tmp.path(), &cfg);
    let args = |dir: &str| {
        vec!["sweep".to_string(), "--config".into(), path.to_str().unwrap().into(), "--out".into(), dir.into()]
    };
    let first = run_in(tmp.path(), &args("a").iter().map(String::as_str).collect::<Vec<_>>());
    assert!(first.status.success(), "stderr: {}", stderr(&first));
    let second = run_in(tmp.path(), &args("b").iter().map(String::as_str).collect::<Vec<_>>());
    assert!(second.status.success());

    for model in ["beta_only", "full_phase"] {
        let name = format!("sweep_{model}_analytic.csv");
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n1,n2,fidelity,model,engine"));
        assert_eq!(lines.count(), 25);
    }
    let summary = json_at(&tmp.path().join("a/sweep_summary.json"));
    let origin = summary["cells"]["beta_only"]["origin"].as_f64().unwrap();
    assert!((origin - 1.0).abs() < 1e-10);
}

#[test]
fn ladder_with_all_drives_off_reports_unit_fidelities() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_json(|v| {
        for k in 0..4 {
            v["params"]["drives"][k] = serde_json::json!({"rabi": 0.0, "detuning1": 0.0});
        }
        v["ladder_duration"] = serde_json::json!(5.0);
        v["steps_per_period"] = serde_json::json!(40);
    });
    let path = write_config(tmp.path(), &cfg);
    let out = run_in(tmp.path(), &["ladder", "--config", path.to_str().unwrap(), "--out", "art"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = json_at(&tmp.path().join("art/ladder.json"));
    let pairs = doc["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 4);
    for p in pairs {
        assert!((p["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn report_writes_feasibility_and_decoherence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["report", "--paper-defaults", "--out", "art"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let doc = json_at(&tmp.path().join("art/report.json"));
    let t1_us = doc["feasibility"]["t1_si"].as_f64().unwrap() * 1e6;
    assert!((t1_us - 0.137).abs() < 0.002, "t1 = {t1_us} us");
    assert!(doc["decoherence"]["loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn env_var_overrides_output_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--paper-defaults", "--out", "flag_dir"])
        .current_dir(tmp.path())
        .env("CHI_FORGE_OUT", "env_dir")
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(tmp.path().join("env_dir/run.json").exists());
    assert!(!tmp.path().join("flag_dir").exists());
}
