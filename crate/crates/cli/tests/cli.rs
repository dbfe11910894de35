use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ensemble"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn validate_exit_codes() {
    let ok = bin().arg("validate").arg(configs().join("rotor9.json")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = bin().arg("validate").arg(configs().join("equally_spaced.json")).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["violations"][0]["indices"][0], serde_json::json!([1, 2]));
    let missing = bin().arg("validate").arg("does/not/exist.json").output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn synthesize_then_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("single_rotation.json");
    let s = bin()
        .args(["synthesize"])
        .arg(&cfg)
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    for control in ["control.json", "control.csv"] {
        let sim_dir = dir.path().join(control.replace('.', "_"));
        let r = bin()
            .arg("simulate")
            .arg(&cfg)
            .arg(dir.path().join(control))
            .arg("--grid-points")
            .arg("11")
            .arg("-o")
            .arg(&sim_dir)
            .output()
            .unwrap();
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        let csv = std::fs::read_to_string(sim_dir.join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 12);
        let worst = csv
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "{worst}");
    }
}

#[test]
fn report_writes_summary_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let r = bin()
        .arg("report")
        .arg(configs().join("orientation.json"))
        .args(["--trend", "8,16", "-o"])
        .arg(dir.path())
        .output()
        .unwrap();
    // the plateau cannot be fitted to the default tolerance
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 3);
    assert!(summary["fit_floor"].as_f64().unwrap() <= summary["sup_error"].as_f64().unwrap() + 1e-3);
    let trend = std::fs::read_to_string(dir.path().join("trend.csv")).unwrap();
    assert!(trend.starts_with("n,fit_degree,sup_error,fit_floor"));
    assert_eq!(trend.lines().count(), 3);
}

#[test]
fn n_budget_exhaustion_is_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"generator": "planar_rotor", "dimension": 5},
            "target": {"kind": "cosine", "c": 0.7853981633974483},
            "epsilon": 0.001, "delta": 1.0}"#,
    )
    .unwrap();
    let r = bin().arg("synthesize").arg(&cfg).args(["--n-budget", "50", "-o"]).arg(dir.path()).output().unwrap();
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn bad_config_is_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"epsilon": 0.1, "unknown": 1}"#).unwrap();
    let r = bin().arg("report").arg(&cfg).arg("-o").arg(dir.path()).output().unwrap();
    assert_eq!(r.status.code(), Some(1));
}
