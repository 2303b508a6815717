use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const RENEWAL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/renewal.toml");

fn infersched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infersched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = infersched(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Data rows of a CSV written by the CLI, header comment and column header stripped.
fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap().to_string();
    lines.next().unwrap();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (comment, rows)
}

const TWO_STATE_CHANNEL: &str = r#"
[channel]
alpha = 0.4
transmission = [[[1, 0.5], [2, 0.5]], [[5, 1.0]]]
feedback = [[[1, 1.0]], [[2, 1.0]]]
"#;

#[test]
fn white_noise_curve_is_flat() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[source.ar]\ncoefficients = []\nnoise_var = 0.01\nobs_noise_var = 0.001\n{TWO_STATE_CHANNEL}\n[policy]\ndelta_max = 30\n[output]\ncurve_rows = 30\n"
        ),
    );
    let out = dir.path().join("out");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "error-curve"]);
    let (comment, rows) = csv_rows(&out.join("error_curve.csv"));
    assert!(comment.starts_with("# config_hash="));
    assert!(comment.ends_with(" seed=1"));
    assert_eq!(rows.len(), 30);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        assert!((r[1].parse::<f64>().unwrap() - 0.011).abs() < 1e-15);
    }
}

#[test]
fn missing_source_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TWO_STATE_CHANNEL);
    let out = infersched(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("source"));
}

#[test]
fn invalid_field_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[source]\nh_table = [1.0, 2.0]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 0\n"),
    );
    let out = infersched(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("policy.buffer_size"));
}

#[test]
fn solver_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[source]\nh_table = [1.0, 2.0]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 2000\n"),
    );
    let out = infersched(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_curve_picks_freshest_mapping() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[source]\nh_table = [0.3]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 3\n"),
    );
    let out = dir.path().join("out");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "solve"]);
    let (_, betas) = csv_rows(&out.join("betas.csv"));
    assert_eq!(betas.len(), 9);
    assert!(betas.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.3));
    let (_, mapping) = csv_rows(&out.join("mapping.csv"));
    assert!(mapping.iter().all(|r| r[1] == "0"));
}

#[test]
fn increasing_curve_never_uses_stale_samples() {
    let dir = TempDir::new().unwrap();
    let table: Vec<String> = (1..=40).map(|d| format!("{:.1}", d as f64)).collect();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[source]\nh_table = [{}]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 4\n",
            table.join(", ")
        ),
    );
    let out = dir.path().join("out");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "solve"]);
    let (_, mapping) = csv_rows(&out.join("mapping.csv"));
    assert_eq!(mapping.len(), 2);
    assert!(mapping.iter().all(|r| r[1] == "0"));
}

#[test]
fn renewal_case_end_to_end() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let solved = run_ok(&["--config", RENEWAL, "--out", out, "solve"]);
    let h_opt: f64 = solved
        .split("h_opt = ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    // bisection tolerance is 1e-9 of the curve range
    assert!((h_opt - 1.5).abs() <= 19e-9, "{solved}");

    let policy = dir.path().join("policy.toml");
    run_ok(&["--config", RENEWAL, "--out", out, "simulate", "--policy", policy.to_str().unwrap(), "--trace", "8"]);
    let (_, sims) = csv_rows(&dir.path().join("simulate.csv"));
    assert_eq!(sims.len(), 2);
    for r in &sims {
        assert_eq!(r[2].parse::<f64>().unwrap(), 1.5);
    }
    let (_, trace) = csv_rows(&dir.path().join("trace.csv"));
    let deltas: Vec<&str> = trace.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(deltas, ["1", "1", "2", "1", "2", "1", "2", "1"]);

    let report = run_ok(&["--config", RENEWAL, "--out", out, "oracle-check", "--dump-values"]);
    assert!(report.contains("PASS"));
    assert!(dir.path().join("values.csv").exists());
}

#[test]
fn artifact_from_another_problem_is_rejected() {
    let dir = TempDir::new().unwrap();
    let other = write_config(
        dir.path(),
        &format!("[source]\nh_table = [1.0, 2.0, 3.0]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 2\n"),
    );
    let first = dir.path().join("a");
    run_ok(&["--config", other.to_str().unwrap(), "--out", first.to_str().unwrap(), "solve"]);
    let policy = first.join("policy.toml");
    let out = infersched(&["--config", RENEWAL, "--out", dir.path().to_str().unwrap(), "simulate", "--policy", policy.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));
}

#[test]
fn random_oracle_instances_pass() {
    let dir = TempDir::new().unwrap();
    let text = run_ok(&["--config", RENEWAL, "--out", dir.path().to_str().unwrap(), "--seed", "5", "oracle-check", "--random", "4"]);
    assert_eq!(text.matches("PASS instance").count(), 4, "{text}");
    let (_, rows) = csv_rows(&dir.path().join("oracle.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn sweep_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let table: Vec<String> = (1..=30).map(|d| format!("{:.3}", (d as f64).sqrt())).collect();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[source]\nh_table = [{}]\n{TWO_STATE_CHANNEL}\n[policy]\nbuffer_size = 3\n[simulation]\nhorizon = 30000\nseeds = 2\nalphas = [0.2, 1.0]\n",
            table.join(", ")
        ),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2", "sweep"]);
    }
    let sweep_a = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(sweep_a, fs::read_to_string(b.join("sweep.csv")).unwrap());
    let (_, rows) = csv_rows(&a.join("sweep.csv"));
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[1] == "iid_baseline") {
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn reference_solution_replays_to_its_cost() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let solved = run_ok(&["--out", out, "solve"]);
    assert!(solved.contains("psi* = [46;26]"), "{solved}");
    let policy = dir.path().join("policy.toml");
    let sim = run_ok(&["--out", out, "simulate", "--policy", policy.to_str().unwrap()]);
    let line = sim.lines().find(|l| l.contains("standard errors away")).unwrap();
    let z: f64 = line
        .split('(')
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(z <= 3.0, "{line}");
}
