use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn chc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn run_ok(experiment: &str, config: &str, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![experiment, "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = chc(&args);
    assert!(
        o.status.success(),
        "{experiment} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

const SIMULATE: &str = "experiment = simulate\n[solver]\nM = 16\nP = 64\ndt = 1e-4\nT = 0.01\n[potential]\nlambda = 1\nn = 2\n[run]\nc = 0.3\nseed = 1\nsnapshot_every = 10\n";

#[test]
fn zero_horizon_writes_initial_snapshot() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sim.conf", &SIMULATE.replace("T = 0.01", "T = 0"));
    let out = dir.path().join("out");
    run_ok("simulate", &cfg, &out, &[]);
    let csv = fs::read_to_string(out.join("simulate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,c_0,c_1,"));
    assert!(lines[1].starts_with("0,0.3,"));
    assert!(out.join("simulate.summary.json").exists());
    assert!(out.join("run.meta.json").exists());
}

#[test]
fn simulate_snapshots_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sim.conf", SIMULATE);
    let out = dir.path().join("out");
    let stdout = run_ok("simulate", &cfg, &out, &[]);
    assert!(stdout.starts_with("simulate: 100 steps"), "{stdout}");
    let csv = fs::read_to_string(out.join("simulate.csv")).unwrap();
    // t = 0, 10 intermediate snapshots including the last step, header
    assert_eq!(csv.lines().count(), 12);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulate.summary.json")).unwrap()).unwrap();
    assert!(summary["mean_drift"].as_f64().unwrap() <= 1e-12);
    assert_eq!(summary["final_mean"].as_f64().unwrap(), 0.3);
}

fn bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run.meta.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let configs = [
        ("simulate", SIMULATE.to_string()),
        (
            "sample-measure",
            "experiment = sample-measure\nM = 8\nP = 32\nlambda = 0\nn = 2\nseed = 2\ncount = 5000\n".to_string(),
        ),
        (
            "strong-feller",
            "experiment = strong-feller\nM = 8\nP = 32\ndt = 1e-3\nT = 0.02\nlambda = 1\nn = 2\nseed = 3\nensemble = 16\n".to_string(),
        ),
        (
            "mixing",
            "experiment = mixing\nM = 8\nP = 32\ndt = 1e-3\nT = 0.02\nlambda = 0\nn = 2\nseed = 4\nensemble = 16\ncount = 2000\nx = 0.5\n".to_string(),
        ),
    ];
    let dir = TempDir::new().unwrap();
    for (exp, text) in configs {
        let cfg = write_config(dir.path(), &format!("{exp}.conf"), &text);
        let a = dir.path().join(format!("{exp}-1"));
        let b = dir.path().join(format!("{exp}-8"));
        let c = dir.path().join(format!("{exp}-again"));
        run_ok(exp, &cfg, &a, &["--threads", "1"]);
        run_ok(exp, &cfg, &b, &["--threads", "8"]);
        run_ok(exp, &cfg, &c, &["--threads", "8"]);
        assert_eq!(bodies(&a), bodies(&b), "{exp}: 1 vs 8 threads");
        assert_eq!(bodies(&b), bodies(&c), "{exp}: rerun");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sim.conf", SIMULATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok("simulate", &cfg, &a, &[]);
    run_ok("simulate", &cfg, &b, &["--seed", "2"]);
    assert_ne!(fs::read(a.join("simulate.csv")).unwrap(), fs::read(b.join("simulate.csv")).unwrap());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("run.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 2);
}

#[test]
fn blowup_exits_nonzero_with_diagnostics() {
    let dir = TempDir::new().unwrap();
    let text = "experiment = simulate\nM = 16\nP = 64\ndt = 1e-2\nT = 1\nlambda = 0\nn = 20\nseed = 1\nx = 1.2\n";
    let cfg = write_config(dir.path(), "blow.conf", text);
    let out = dir.path().join("out");
    let o = chc(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical blowup"));
    let diag = fs::read_to_string(out.join("simulate.diagnostics.csv")).unwrap();
    assert!(diag.starts_with("steps_completed,blowup_step,"));
    assert_eq!(diag.lines().count(), 2);
    assert!(out.join("simulate.csv").exists());
    assert!(!out.join("simulate.summary.json").exists());
}

#[test]
fn config_errors_report_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", &SIMULATE.replace("P = 64", "P = 16"));
    let o = chc(&["simulate", "--config", &cfg]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4: solver.P: P >= 2*(M+1)"), "{err}");

    let cfg = write_config(dir.path(), "typo.conf", &format!("{SIMULATE}tmie = 3\n"));
    let o = chc(&["simulate", "--config", &cfg]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `run.tmie`"));

    let o = chc(&["energy", "--config", &write_config(dir.path(), "sim.conf", SIMULATE)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("but the command is `energy`"));
}

#[test]
fn every_experiment_runs_small() {
    let dir = TempDir::new().unwrap();
    let common = "M = 8\nP = 32\ndt = 1e-3\nT = 0.02\nseed = 5\n";
    let cases = [
        ("invariant-convergence", "lambda = 0\nn = 1\ncount = 2000\nn_list = 1, 2\n"),
        ("reflection", "lambda = 0\nn = 2\nchains = 2\nn_list = 2, 4\ndt = 1e-5\nT = 0.001\n"),
        ("semigroup", "lambda = 0\nn = 1\nensemble = 8\nn_list = 1, 2\n"),
        ("control", "lambda = 1\nn = 2\ndelta = 0.2\nx = 0.3, 0.1\ny = -0.2, 0, 0.15\npoints_list = 16, 32\nnoise_scales = 0, 0.1\nensemble = 4\n"),
        ("energy", "lambda = 1\nn = 2\ntrajectories = 4\ndt = 1e-5\nT = 0.001\n"),
    ];
    for (exp, extra) in cases {
        // later keys must not repeat earlier ones, so drop overridden defaults
        let mut text = String::new();
        for line in common.lines() {
            let key = line.split('=').next().unwrap().trim();
            if !extra.lines().any(|l| l.split('=').next().unwrap().trim() == key) {
                text.push_str(line);
                text.push('\n');
            }
        }
        text.push_str(extra);
        let cfg = write_config(dir.path(), &format!("{exp}.conf"), &text);
        let out = dir.path().join(exp);
        let stdout = run_ok(exp, &cfg, &out, &[]);
        assert!(stdout.starts_with(&format!("{exp}: ")), "{stdout}");
        let csv = fs::read_to_string(out.join(format!("{exp}.csv"))).unwrap();
        assert!(csv.lines().count() >= 2, "{exp}: {csv}");
        assert!(out.join(format!("{exp}.summary.json")).exists());
    }
    assert!(dir.path().join("control/control.steering.csv").exists());
    assert!(dir.path().join("reflection/reflection.density.csv").exists());
}
