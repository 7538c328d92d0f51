use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn viana(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viana"))
        .args(args)
        .current_dir(dir)
        .env_remove("VIANA_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const CHEBYSHEV: &str = r#"{
    "params": {"a": 2.0, "d": 2, "alpha": 0.0, "preperiod": 1, "period": 1},
    "ensemble": 16, "n_steps": 100000, "seed": 1
}"#;

#[test]
fn chebyshev_micro_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CHEBYSHEV);
    let out = viana(&["lyapunov", "--config", &cfg, "--out", "o", "--threads", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("o/report.json"));
    let est = &r["result"]["estimate"];
    assert_eq!(est["chi_base"].as_f64().unwrap(), 2f64.ln());
    assert!((est["chi_fiber"].as_f64().unwrap() - 2f64.ln()).abs() < 0.05);
    let m = json(&dir.path().join("o/manifest.json"));
    assert_eq!(m["threads"], 2);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["assertions"]["chi_base_exact"], true);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(r.get("wall_time_s").is_none());
}

#[test]
fn invalid_config_exits_two_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"params": {"alpha": 0.9}}"#);
    let out = viana(&["shadow", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "InvalidConfig");
    assert!(!dir.path().join("o").exists());

    let cfg = write(dir.path(), "u.json", r#"{"ensembel": 3}"#);
    let out = viana(&["lyapunov", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "ConfigParse");
}

#[test]
fn assertion_failure_exits_three() {
    // attracting fixed point: no orbit has a positive exponent
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"params": {"a": 0.5, "alpha": 0.0}, "ensemble": 4, "n_steps": 2000}"#,
    );
    let out = viana(&["lyapunov", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let m = json(&dir.path().join("o/manifest.json"));
    assert_eq!(m["assertions"]["positive_fraction_99"], false);
    assert_eq!(m["passed"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", CHEBYSHEV);
    viana(&["lyapunov", "--config", &cfg, "--out", "a", "--threads", "1"], dir.path());
    viana(&["lyapunov", "--config", &cfg, "--out", "b", "--threads", "3"], dir.path());
    let a = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(a, b);
    let ma = json(&dir.path().join("a/manifest.json"));
    let mb = json(&dir.path().join("b/manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"alphas": [1e-3, 1e-4]}"#);
    let out = viana(&["shadow", "--config", &cfg, "--out", "o", "--seed", "9", "--dry-run"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let resolved: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resolved["experiment"], "shadow");
    assert_eq!(resolved["seed"], 9);
    assert_eq!(resolved["output_dir"], "o");
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn formats_select_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"ensemble": 2, "n_steps": 2000, "alphas": [0.0, 1e-3]}"#);
    let out = viana(&["sweep", "--config", &cfg, "--out", "o", "--format", "csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    assert!(o.join("report.json").exists());
    assert!(o.join("sweep.csv").exists());
    assert!(!o.join("sweep.svg").exists());
    let csv = std::fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("alpha,chi_fiber,stderr,frac_positive\n"));
    assert!(!csv.contains('\r'));
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"samples": 100}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_viana"))
        .args(["distortion", "--config", &cfg, "--out", "o"])
        .current_dir(dir.path())
        .env("VIANA_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("o/manifest.json"))["threads"], 2);
}

#[test]
fn checkpointed_run_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let plain = write(dir.path(), "p.json", r#"{"ensemble": 3, "n_steps": 1500000, "burn_in": 10, "seed": 4}"#);
    let ckp = write(
        dir.path(),
        "k.json",
        r#"{"ensemble": 3, "n_steps": 1500000, "burn_in": 10, "seed": 4, "checkpoint": "run.ckp"}"#,
    );
    viana(&["lyapunov", "--config", &plain, "--out", "a"], dir.path());
    viana(&["lyapunov", "--config", &ckp, "--out", "b"], dir.path());
    assert!(dir.path().join("run.ckp").exists());
    let a = json(&dir.path().join("a/report.json"));
    let b = json(&dir.path().join("b/report.json"));
    assert_eq!(a["result"], b["result"]);
}
