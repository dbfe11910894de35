//! Planar rigid rotor driven through its dipole, `B ψ = −i cos(θ) ψ`.
//!
//! Level ordering: `φ₀ = 1/√(2π)`, then for `k ≥ 1` the pair
//! `φ_{2k−1} = cos(kθ)/√π`, `φ_{2k} = sin(kθ)/√π`, both with `λ = k²`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::linalg::C64;
use crate::spectral::{validate_assumptions, SpectralModel, ValidationReport};
use crate::target::ModulusTarget;

pub const DEFAULT_ROTOR_DIMENSION: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotorError {
    #[error("rotor needs at least {min} levels, got {got}")]
    TooSmall { got: usize, min: usize },
    #[error("coupling ({0}, {1}) disagrees with quadrature by {2:e}")]
    Quadrature(usize, usize, f64),
    #[error("rotor model failed validation: {0:?}")]
    Validation(ValidationReport),
}

/// Angular quantum number and parity class of a level.
fn mode(j: usize) -> (usize, bool) {
    if j == 0 {
        (0, true)
    } else {
        (j.div_ceil(2), j % 2 == 1)
    }
}

/// Eigenfunction value `φ_j(θ)`.
pub fn eigenfunction(j: usize, theta: f64) -> f64 {
    match mode(j) {
        (0, _) => 1.0 / (2.0 * PI).sqrt(),
        (k, true) => (k as f64 * theta).cos() / PI.sqrt(),
        (k, false) => (k as f64 * theta).sin() / PI.sqrt(),
    }
}

pub fn eigenvalue(j: usize) -> f64 {
    let (k, _) = mode(j);
    (k * k) as f64
}

/// Closed-form `⟨φ_j, −i cosθ φ_k⟩`.
fn closed_form_coupling(j: usize, k: usize) -> C64 {
    let (kj, cj) = mode(j);
    let (kk, ck) = mode(k);
    if cj != ck || kj.abs_diff(kk) != 1 {
        return C64::new(0.0, 0.0);
    }
    let v = if kj == 0 || kk == 0 {
        1.0 / 2f64.sqrt()
    } else {
        0.5
    };
    C64::new(0.0, -v)
}

/// `⟨φ_j, −i cosθ φ_k⟩` by the trapezoid rule on `[0, 2π)`.
///
/// The integrand is a trigonometric polynomial of degree at most
/// `k_j + k_k + 1`, so any rule with more nodes than twice that is exact.
pub fn quadrature_coupling(j: usize, k: usize) -> C64 {
    let degree = mode(j).0 + mode(k).0 + 1;
    let nodes = 4 * degree + 8;
    let h = 2.0 * PI / nodes as f64;
    let sum: f64 = (0..nodes)
        .map(|i| {
            let t = i as f64 * h;
            eigenfunction(j, t) * t.cos() * eigenfunction(k, t)
        })
        .sum();
    C64::new(0.0, -sum * h)
}

/// Rotor truncated to its first `n` levels (band limit 2).
pub fn build_planar_rotor(n: usize) -> Result<SpectralModel, RotorError> {
    if n < 2 {
        return Err(RotorError::TooSmall { got: n, min: 2 });
    }
    let lambdas: Vec<f64> = (0..n).map(eigenvalue).collect();
    let mut entries = Vec::new();
    for j in 0..n {
        for k in j..n.min(j + 5) {
            let exact = closed_form_coupling(j, k);
            let quad = quadrature_coupling(j, k);
            let err = (exact - quad).norm();
            if err > 1e-10 {
                return Err(RotorError::Quadrature(j, k, err));
            }
            if exact.norm() > 0.0 {
                entries.push((j, k, exact));
            }
        }
    }
    Ok(SpectralModel::new(lambdas, entries, Some(2)).expect("rotor data is consistent"))
}

pub fn alpha_from_tilt(tilt: f64) -> f64 {
    tilt.sin()
}

pub fn tilt_from_alpha(alpha: f64) -> f64 {
    alpha.clamp(-1.0, 1.0).asin()
}

/// Keep molecules tilted below π/6 in `φ₀`, move those above π/3 to `φ₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotorScenario {
    pub dimension: usize,
    pub model: SpectralModel,
    pub target: ModulusTarget,
    pub epsilon: f64,
    pub delta: f64,
}

pub fn orientation_target() -> ModulusTarget {
    ModulusTarget::Plateau {
        keep_below: alpha_from_tilt(PI / 6.0),
        transfer_above: alpha_from_tilt(PI / 3.0),
    }
}

pub fn orientation_scenario(n: usize, epsilon: f64, delta: f64) -> Result<RotorScenario, RotorError> {
    if n < 4 {
        return Err(RotorError::TooSmall { got: n, min: 4 });
    }
    let model = build_planar_rotor(n)?;
    let report = validate_assumptions(&model).expect("rotor has at least two levels");
    if !report.passed {
        return Err(RotorError::Validation(report));
    }
    Ok(RotorScenario {
        dimension: n,
        model,
        target: orientation_target(),
        epsilon,
        delta,
    })
}
