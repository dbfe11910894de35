//! wasm-bindgen exports for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no glue beyond
//! `JSON.parse`.

use std::f64::consts::PI;
use std::path::Path;

use ensemble_core::galerkin::uniform_grid;
use ensemble_core::pipeline::{rotor_source, run_pipeline, PipelineConfig};
use ensemble_core::su2::{commutator_defect, fit_odd_angle_curve, AuxGenerator};
use ensemble_core::linalg::C64;
use ensemble_core::target::ModulusTarget;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Moduli `|U₀₀|` across α after the full pipeline for `m(α) = |cos(c α)|`
/// on the rotor with `dimension` levels and averaging parameter `n`.
pub fn ensemble_response_json(c: f64, n: usize, dimension: usize, points: usize) -> Result<String, String> {
    let mut cfg = PipelineConfig::new(rotor_source(dimension), ModulusTarget::Cosine { c }, 0.1, 1.0);
    cfg.averaging.n = Some(n.max(1));
    cfg.grid.points = points.clamp(2, 201);
    let out = run_pipeline(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let r = &out.report;
    Ok(json!({
        "alpha": r.alpha_grid,
        "modulus": r.moduli.iter().map(|m| m[0]).collect::<Vec<_>>(),
        "target": r.targets.iter().map(|m| m[0]).collect::<Vec<_>>(),
        "sup_error": r.sup_error,
        "stages": out.summary.stages,
        "duration": out.summary.control_duration,
    })
    .to_string())
}

/// Sup over α of the commutator-product defect with `n t² = 1`, for `n = 1, 2, 4, …, 2^levels`.
pub fn bracket_convergence_json(levels: u32) -> Result<String, String> {
    let b = C64::new(0.0, -1.0 / 2f64.sqrt());
    let x = AuxGenerator::x(b).map_err(|e| e.to_string())?;
    let y = AuxGenerator::y(b).map_err(|e| e.to_string())?;
    let grid = uniform_grid(21);
    let mut ns = Vec::new();
    let mut errs = Vec::new();
    for k in 0..=levels.min(16) {
        let n = 1u64 << k;
        let t = 1.0 / (n as f64).sqrt();
        let mut sup = 0.0f64;
        for &a in &grid {
            sup = sup.max(commutator_defect(x.matrix(), y.matrix(), t, n, a).map_err(|e| e.to_string())?.power);
        }
        ns.push(n);
        errs.push(sup);
    }
    Ok(json!({ "n": ns, "error": errs }).to_string())
}

/// Odd fit of the plateau angle curve at the given degree.
pub fn odd_fit_json(keep_below: f64, transfer_above: f64, degree: usize) -> Result<String, String> {
    if !(0.0 <= keep_below && keep_below < transfer_above && transfer_above <= 1.0) {
        return Err("need 0 <= keep_below < transfer_above <= 1".into());
    }
    let target = ModulusTarget::Plateau {
        keep_below,
        transfer_above,
    };
    let degree = if degree % 2 == 0 { degree + 1 } else { degree };
    let samples: Vec<(f64, f64)> = uniform_grid(201).into_iter().map(|a| (a, target.angle(a))).collect();
    let fit = fit_odd_angle_curve(&samples, degree, 1e-3).map_err(|e| e.to_string())?;
    let alpha = uniform_grid(101);
    Ok(json!({
        "alpha": alpha,
        "target": alpha.iter().map(|&a| target.angle(a)).collect::<Vec<_>>(),
        "fit": alpha.iter().map(|&a| fit.curve.eval(a)).collect::<Vec<_>>(),
        "coefficients": fit.curve.coefficients,
        "sup_error": fit.sup_error,
        "max_angle": PI / 2.0,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn ensemble_response(c: f64, n: usize, dimension: usize, points: usize) -> Result<String, JsValue> {
    ensemble_response_json(c, n, dimension, points).map_err(err)
}

#[wasm_bindgen]
pub fn bracket_convergence(levels: u32) -> Result<String, JsValue> {
    bracket_convergence_json(levels).map_err(err)
}

#[wasm_bindgen]
pub fn odd_fit(keep_below: f64, transfer_above: f64, degree: usize) -> Result<String, JsValue> {
    odd_fit_json(keep_below, transfer_above, degree).map_err(err)
}
