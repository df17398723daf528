use std::path::Path;
use std::process::{Command, Output};

fn stabrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabrisk")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn powerflow_on_bundled_case() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stabrisk(&["powerflow", "--out", &out_arg(tmp.path()), "--tol", "1e-9"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(tmp.path().join("powerflow.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 39);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mismatch: f64 = stdout.split("max mismatch ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(mismatch <= 1e-9, "{stdout}");
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["files"], serde_json::json!(["powerflow.csv"]));
}

#[test]
fn missing_case_is_a_usage_error() {
    let o = stabrisk(&["powerflow", "--case", "/definitely/not/here.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not/here.toml"));
}

#[test]
fn bad_flags_and_config_keys_exit_one() {
    assert_eq!(stabrisk(&["simulate", "--line", "16-17", "--type", "XYZ"]).status.code(), Some(1));
    assert_eq!(stabrisk(&["mc", "--penetration", "25", "--load-scale", "1.1"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "sed = 3\n").unwrap();
    assert_eq!(stabrisk(&["--config", cfg.to_str().unwrap(), "validate-case"]).status.code(), Some(1));
    assert_eq!(stabrisk(&["--help"]).status.code(), Some(0));
}

#[test]
fn unsolvable_load_scale_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stabrisk(&["simulate", "--no-fault", "--load-scale", "3", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_three_phase_fault_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stabrisk(&["simulate", "--line", "16-17", "--type", "lll", "--fct", "0.1", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&tmp.path().join("metrics.json"));
    assert_eq!(m["termination"], "completed");
    assert!(m["tsi"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 2000);
}

#[test]
fn undisturbed_run_has_zero_severity() {
    let tmp = tempfile::tempdir().unwrap();
    // the highest bus sits 0.064 pu above nominal
    let o = stabrisk(&["simulate", "--no-fault", "--voltage-threshold", "0.1", "--t-end", "3", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&tmp.path().join("metrics.json"));
    for k in ["sev_a", "sev_v", "sev_f", "g"] {
        assert_eq!(m[k].as_f64(), Some(0.0), "{k}");
    }
}

#[test]
fn sustained_fault_diverges_without_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stabrisk(&["simulate", "--line", "16-17", "--fct", "8", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0));
    let m = json(&tmp.path().join("metrics.json"));
    assert_eq!(m["termination"], "diverged");
    assert_eq!(m["tsi"].as_f64(), Some(-1.0));
    assert_eq!(m["sev_a"].as_f64(), Some(1.0));
}

fn mc(dir: &Path, workers: &str) -> Output {
    stabrisk(&["mc", "--n-max", "16", "--seed", "11", "--workers", workers, "--out", &out_arg(dir)])
}

#[test]
fn monte_carlo_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    // 16 samples never satisfy the convergence window
    assert_eq!(mc(&a, "1").status.code(), Some(3));
    assert_eq!(mc(&b, "1").status.code(), Some(3));
    assert_eq!(mc(&c, "4").status.code(), Some(3));
    for f in ["samples.csv", "summary.json", "histogram.csv", "manifest.json"] {
        let first = std::fs::read(a.join(f)).unwrap();
        assert_eq!(first, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(first, std::fs::read(c.join(f)).unwrap(), "{f} across worker counts");
    }
    assert_eq!(std::fs::read_to_string(a.join("samples.csv")).unwrap().lines().count(), 17);
}

#[test]
fn sweep_point_matches_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, s) = (tmp.path().join("m"), tmp.path().join("s"));
    mc(&m, "1");
    let o = stabrisk(&[
        "sweep", "--axis", "load", "--points", "1.0", "--n-max", "16", "--seed", "11", "--out", &out_arg(&s),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let g = json(&m.join("summary.json"))["g"].as_f64().unwrap();
    let curve = std::fs::read_to_string(s.join("curve.csv")).unwrap();
    let row: Vec<&str> = curve.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2].parse::<f64>().unwrap(), g);
    assert_eq!(row[1], "0");
}
