use std::f64::consts::PI;
use std::path::Path;

use ensemble_core::galerkin::{ensemble_propagate, uniform_grid, PiecewiseControl};
use ensemble_core::pipeline::{
    plan, rotor_source, run_pipeline, write_artifacts, DegreeRule, ExitStatus, PipelineConfig, PipelineError,
};
use ensemble_core::su2::PulseTrain;
use ensemble_core::target::ModulusTarget;

fn single() -> PipelineConfig {
    PipelineConfig::new(rotor_source(5), ModulusTarget::Cosine { c: PI / 4.0 }, 0.1, 1.0)
}

#[test]
fn artifacts_reload_and_replay() {
    let cfg = single();
    let out = run_pipeline(&cfg, Path::new(".")).unwrap();
    assert_eq!(out.status(), ExitStatus::Success);
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&out, &cfg, dir.path()).unwrap();
    for f in ["train.json", "control.json", "control.csv", "report.csv", "stages.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("control.json")).unwrap();
    let control = PiecewiseControl::from_json(&text).unwrap();
    assert_eq!(control, out.plan.control);
    let train = PulseTrain::from_json(&std::fs::read_to_string(dir.path().join("train.json")).unwrap()).unwrap();
    assert_eq!(train, out.plan.train);

    // replaying the saved control reproduces the reported moduli
    let grid = uniform_grid(cfg.grid.points);
    let props = ensemble_propagate(&out.plan.system, &control, &grid).unwrap();
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "alpha,m11,m12,m21,m22,t11,t12,t21,t22,err");
    for (line, u) in lines.zip(&props) {
        let m11: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((m11 - u.as_matrix()[(0, 0)].norm()).abs() < 1e-12);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 0);
}

#[test]
fn config_round_trips_and_rejects_unknown_fields() {
    let cfg = PipelineConfig::orientation_preset(5, 0.1, 1.0);
    assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    let mut v: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    v["fit"]["degre_cap"] = 3.into();
    assert!(matches!(PipelineConfig::from_json(&v.to_string()), Err(PipelineError::Config(_))));
}

#[test]
fn unreachable_fit_is_reported_not_fatal() {
    let mut cfg = PipelineConfig::orientation_preset(5, 0.1, 1.0);
    cfg.synthesis.slices = 4;
    let p = plan(&cfg, Path::new(".")).unwrap();
    assert_eq!(p.status, ExitStatus::FitUnreachable);
    assert_eq!(p.status.code(), 3);
    assert_eq!(p.degree_scan.len(), 5);
    // degree picked by the two-level moduli error, not by the angle fit
    let best = p
        .degree_scan
        .iter()
        .min_by(|a, b| a.aux_error.total_cmp(&b.aux_error))
        .unwrap();
    assert_eq!(p.fit_degree, best.degree);

    cfg.fit.select = DegreeRule::FitError;
    let q = plan(&cfg, Path::new(".")).unwrap();
    assert_eq!(q.fit_degree, 9);
}

#[test]
fn stage_budget_degrades_gracefully() {
    let mut cfg = PipelineConfig::orientation_preset(5, 0.1, 1.0);
    cfg.synthesis.slices = 32;
    cfg.budget.max_stages = 3;
    let p = plan(&cfg, Path::new(".")).unwrap();
    assert_eq!(p.stages.len(), 3);
    assert!(p.notes.iter().any(|n| n.contains("budget")));
}

#[test]
fn invalid_model_maps_to_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"{"lambdas": [0.0, 1.0, 2.0], "couplings": [[0, 1, 1.0, 0.0], [1, 2, 0.5, 0.0]]}"#;
    std::fs::write(dir.path().join("m.json"), model).unwrap();
    let mut cfg = single();
    cfg.model = serde_json::from_str(r#"{"file": "m.json"}"#).unwrap();
    match run_pipeline(&cfg, dir.path()) {
        Err(e) => assert_eq!(e.exit_status(), ExitStatus::Validation),
        Ok(_) => panic!("equally spaced model must be rejected"),
    }
}
