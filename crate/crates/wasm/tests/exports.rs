use ensemble_wasm::{bracket_convergence_json, ensemble_response_json, odd_fit_json};
use serde_json::Value;

#[test]
fn response_tracks_cosine() {
    let v: Value = serde_json::from_str(&ensemble_response_json(std::f64::consts::FRAC_PI_4, 40, 5, 11).unwrap()).unwrap();
    assert_eq!(v["alpha"].as_array().unwrap().len(), 11);
    assert!(v["sup_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn convergence_decreases() {
    let v: Value = serde_json::from_str(&bracket_convergence_json(6).unwrap()).unwrap();
    let e: Vec<f64> = v["error"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(e.len(), 7);
    assert!(e[6] < e[3]);
}

#[test]
fn fit_is_odd_and_reports_error() {
    let v: Value = serde_json::from_str(&odd_fit_json(0.5, 0.866, 4).unwrap()).unwrap();
    assert_eq!(v["coefficients"].as_array().unwrap().len(), 3);
    assert!(v["sup_error"].as_f64().unwrap() > 0.0);
    assert!(odd_fit_json(0.9, 0.5, 3).is_err());
}
