//! End-to-end CLI checks against the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-lab"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"n": 60, "n_test": 15, "d": 16, "h": 24, "steps": 2, "eta0": 0.05, "seed": 3}"#,
    )
    .unwrap();
    path
}

#[test]
fn gen_config_then_run_exports_contract_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["gen-config", "fig2"]);
    let config_path = dir.path().join("fig2.json");
    std::fs::write(&config_path, &out.stdout).unwrap();
    // shrink so the smoke run stays fast, exercising the same parse path
    let mut cfg: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&config_path).unwrap()).unwrap();
    for (key, value) in [("n", 60u64), ("n_test", 15), ("d", 16), ("h", 24)] {
        cfg[key] = serde_json::json!(value);
    }
    std::fs::write(&config_path, serde_json::to_vec(&cfg).unwrap()).unwrap();

    let out_dir = dir.path().join("run_out");
    run_ok(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    for name in [
        "config.json",
        "losses.csv",
        "esd_step0.csv",
        "esd_step1.csv",
        "hist_step0_lin.csv",
        "hist_step1_log.csv",
        "checkpoint_step0.wmat",
        "checkpoint_step1.wmat",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing export {name}");
    }
    let losses = std::fs::read_to_string(out_dir.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 2, "steps+1 rows after the header");
}

#[test]
fn malformed_config_exits_one_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"n": 100, "learning_rate": 0.5}"#).unwrap();
    let out = bin()
        .args(["run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning_rate"), "stderr: {err}");

    std::fs::write(&path, r#"{"eta0": -2.0}"#).unwrap();
    let out = bin()
        .args(["run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta0"));
}

#[test]
fn unknown_recipe_and_grid_key_exit_one() {
    let out = bin().args(["figure", "fig99"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig1"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = bin()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--grid",
            "bogus=1,2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta0"));
}

#[test]
fn gen_config_rejects_recipes_without_a_config() {
    let out = bin().args(["gen-config", "fig10-theorem"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theorem"));
}

#[test]
fn theorem_on_small_rows_reports_exact_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    std::fs::write(&rows, "n,h,d\n120,60,40\n200,100,60\n").unwrap();
    let out = run_ok(&[
        "theorem",
        "--rows",
        rows.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,n,h,d,sqrt_hd,frob_norm,spec_norm,sign_agreement,min_abs_g0"
    );
    let factor = (1.0 - 0.9f64) / (1.0 - 0.999f64).sqrt();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let sqrt_hd: f64 = fields[4].parse().unwrap();
        let frob: f64 = fields[5].parse().unwrap();
        assert!(
            (frob / (factor * sqrt_hd) - 1.0).abs() < 1e-6,
            "ratio off on row {line}"
        );
    }
    assert!(dir.path().join("norm_sweep.csv").exists());
}

#[test]
fn sweep_summary_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = run_ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "eta0=0.01,0.1",
        "--seeds",
        "2",
    ]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "header + 2 grid points: {text}");
    assert!(lines[0].starts_with("eta0,runs,"));
    assert!(lines[1].starts_with("0.01,2,"));
    assert!(lines[2].starts_with("0.1,2,"));
}

#[test]
fn analyze_reports_spectral_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let out = run_ok(&[
        "analyze",
        "--weights",
        out_dir.join("checkpoint_step2.wmat").to_str().unwrap(),
    ]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["rows"], 24);
    assert_eq!(value["cols"], 16);
    assert!(value["lambda_max"].as_f64().unwrap() > 0.0);
    assert!(value["separation"].as_f64().unwrap() >= 1.0);
}

#[test]
fn run_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        run_ok(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    for name in ["losses.csv", "esd_step2.csv", "checkpoint_step2.wmat"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}
