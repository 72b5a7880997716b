use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn effham(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_effham"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run effham");
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn sweep_matches_closed_form_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"preset": "constant_drift(1)", "sweep": {"p_min": -3, "p_max": 3, "count": 61, "N": 256}}"#);
    let (code, err) = effham(dir.path(), &["sweep", "--config", &cfg]);
    assert_eq!(code, 0, "{err}");
    let first = fs::read(dir.path().join("hamiltonian.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(first.as_slice());
    assert_eq!(rows.headers().unwrap().iter().collect::<Vec<_>>(), ["p", "H", "residual", "cw_gap"]);
    for rec in rows.records() {
        let rec = rec.unwrap();
        let (p, h): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        assert!((h - (0.5 * (p + 1.0).powi(2) - 0.5)).abs() < 1e-3);
    }
    let certs: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("certificates.json")).unwrap()).unwrap();
    assert_eq!(certs["samples"].as_array().unwrap().len(), 61);

    let (code, _) = effham(dir.path(), &["sweep", "--config", &cfg]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(dir.path().join("hamiltonian.csv")).unwrap(), first);
}

#[test]
fn grid_without_zero_is_augmented() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"preset": "quadratic", "sweep": {"p_min": -1, "p_max": 2, "count": 3, "N": 64}}"#);
    let (code, _) = effham(dir.path(), &["sweep", "--config", &cfg]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(dir.path().join("hamiltonian.csv")).unwrap();
    assert!(text.lines().skip(1).any(|l| l.starts_with("0,")));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn invalid_model_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "discrete", "J": 1, "regime": "I", "ell": 3,
            "hop_plus": [[1, 0, 1]], "hop_minus": [[1, 1, 1]], "switching": [[[0, 0, 0]]]}}"#,
    );
    let (code, err) = effham(dir.path(), &["validate", "--config", &cfg]);
    assert_eq!(code, 2, "{err}");
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["valid"], Value::Bool(false));
    let (code, _) = effham(dir.path(), &["sweep", "--config", &cfg]);
    assert_eq!(code, 2);
    let (code, _) = effham(dir.path(), &["sweep", "--preset", "no_such_preset"]);
    assert_eq!(code, 2);
}

#[test]
fn check_reports_every_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = effham(dir.path(), &["check", "--preset", "detailed_balance_pair"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    for key in ["h0", "convexity", "symmetry", "coercivity", "detailed_balance"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["symmetry"]["expected"], Value::Bool(true));
    assert_eq!(v["symmetry"]["pass"], Value::Bool(true));

    let (code, _) = effham(dir.path(), &["check", "--preset", "discrete_asymmetric(2,1)"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(v["detailed_balance"]["applicable"], Value::Bool(false));
}

#[test]
fn velocity_legendre_and_path_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"preset": "discrete_asymmetric(2,1)",
            "sweep": {"p_min": -3, "p_max": 3, "count": 121},
            "legendre": {"v_min": 0.2, "v_max": 3, "count": 15,
                         "path": {"knots": [[0, 0], [1, 1], [2, 3]], "initial_rate": 0}}}"#,
    );
    let (code, err) = effham(dir.path(), &["velocity", "--config", &cfg]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("velocity.json")).unwrap()).unwrap();
    assert!((v["velocity"][0].as_f64().unwrap() - 1.0).abs() < 1e-8);

    let (code, err) = effham(dir.path(), &["legendre", "--config", &cfg]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(dir.path().join("lagrangian.csv")).unwrap();
    assert!(text.starts_with("v,L,pstar,boundary_flag\n"));
    let rate: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("path_rate.json")).unwrap()).unwrap();
    // first segment runs at the typical velocity and costs nothing
    let l2 = {
        // L(2) for r+ = 2, r- = 1: p* solves 2 e^p - e^-p = 2
        let x = (2.0 + (4.0f64 + 8.0).sqrt()) / 4.0;
        let p = x.ln();
        2.0 * p - (2.0 * (x - 1.0) + (1.0 / x - 1.0))
    };
    assert!((rate["rate"].as_f64().unwrap() - l2).abs() < 1e-3);
}

#[test]
fn simulate_writes_summary_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"preset": "constant_drift(1)", "simulate": {"scales": [0.1, 0.05], "T": 1, "paths": 200, "trajectories": 1}}"#,
    );
    let (code, _) = effham(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(code, 2, "missing seed must be rejected");
    let (code, err) = effham(dir.path(), &["simulate", "--config", &cfg, "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("epsilon,mean_v,sd,se,predicted_v,verdict\n"));
    assert_eq!(summary.lines().count(), 3);
    let traj = fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    assert!(traj.starts_with("t,x_lifted,i\n"));
    let again = dir.path().join("again");
    let (code, _) = effham(&again, &["simulate", "--config", &cfg, "--seed", "5"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(again.join("summary.csv")).unwrap(), summary);
}
