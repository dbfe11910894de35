//! Periodic-pulse averaging: a small resonant control `u*/n` drives the
//! truncated system close to `e^{tA} e^{v_n(t) α M†}`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galerkin::{PiecewiseControl, SimError, Step};
use crate::linalg::{matrix_exp, operator_norm, ComplexMatrix, LinalgError, UnitaryMatrix, C64};
use crate::spectral::{TruncatedSystem, EIGENVALUE_TOL};

/// Tolerance on `|∫u* e^{iκτ}| / T` for the orthogonality conditions.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Relative slack on the validity window.
pub const WINDOW_SLACK: f64 = 1e-9;
pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 200;
/// Largest slot count tried when searching binary patterns.
pub const MAX_BINARY_SLOTS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("driven gap λ₁ − λ₀ must be positive, got {0}")]
    NoGap(f64),
    #[error("driven coupling b12 vanishes")]
    ZeroCoupling,
    #[error("pulse violates orthogonality at pairs {0:?}")]
    Orthogonality(Vec<(usize, usize)>),
    #[error("pulse has zero resonant component")]
    ZeroEfficiency,
    #[error("rotation r = {r} needs effective time {required} beyond K = {limit}")]
    ValidityWindow { r: f64, required: f64, limit: f64 },
    #[error("bound {achieved:e} at n = {n_max} does not reach {wanted:e}")]
    Budget { n_max: usize, achieved: f64, wanted: f64 },
    #[error("no phase alignment within horizon {0}")]
    NoAlignment(f64),
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// `cos(ωt + θ)`.
    Cosine,
    /// `{0, 1}` valued: slot `i` of `pattern.len()` equal slots, shifted by `shift`.
    Binary { pattern: Vec<bool>, shift: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeRequest {
    Cosine,
    Binary,
    /// Cosine, falling back to binary.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPulse {
    pub shape: PulseShape,
    pub omega: f64,
    pub period: f64,
    pub theta: f64,
}

/// `∫₀ᵀ e^{ixτ} dτ`.
fn j_integral(x: f64, t: f64) -> C64 {
    if x.abs() * t < 1e-12 {
        return C64::new(t, 0.0);
    }
    (C64::new(0.0, x * t).exp() - 1.0) / C64::new(0.0, x)
}

/// `∫_a^b e^{ixτ} dτ`.
fn interval_integral(x: f64, a: f64, b: f64) -> C64 {
    C64::new(0.0, x * a).exp() * j_integral(x, b - a)
}

/// Antiderivative of `|cos|`, continuous on ℝ.
fn abs_cos_antiderivative(x: f64) -> f64 {
    let k = ((x + FRAC_PI_2) / PI).floor();
    let sign = if (k as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    2.0 * k + 1.0 + sign * x.sin()
}

impl PeriodicPulse {
    pub fn cosine(omega: f64, theta: f64) -> Self {
        Self {
            shape: PulseShape::Cosine,
            omega,
            period: 2.0 * PI / omega,
            theta,
        }
    }

    /// Binary pattern shifted so the resonant integral has phase `θ`.
    pub fn binary(omega: f64, theta: f64, pattern: Vec<bool>) -> Self {
        let period = 2.0 * PI / omega;
        let base = Self {
            shape: PulseShape::Binary {
                pattern: pattern.clone(),
                shift: 0.0,
            },
            omega,
            period,
            theta,
        };
        // F_shift(−ω) = e^{−iωs} F_0(−ω)
        let phi0 = base.fourier(-omega).arg();
        let shift = ((phi0 - theta) / omega).rem_euclid(period);
        Self {
            shape: PulseShape::Binary { pattern, shift },
            ..base
        }
    }

    /// Active `[a, b)` intervals of a binary pulse inside `[0, T)`.
    fn binary_intervals(&self) -> Vec<(f64, f64)> {
        let PulseShape::Binary { pattern, shift } = &self.shape else {
            return Vec::new();
        };
        let m = pattern.len();
        let w = self.period / m as f64;
        let mut out = Vec::new();
        for (i, &on) in pattern.iter().enumerate() {
            if !on {
                continue;
            }
            let a = (shift + i as f64 * w).rem_euclid(self.period);
            let b = a + w;
            if b <= self.period {
                out.push((a, b));
            } else {
                out.push((a, self.period));
                out.push((0.0, b - self.period));
            }
        }
        out
    }

    pub fn sample(&self, t: f64) -> f64 {
        match &self.shape {
            PulseShape::Cosine => (self.omega * t + self.theta).cos(),
            PulseShape::Binary { pattern, shift } => {
                let m = pattern.len();
                let x = (t - shift).rem_euclid(self.period) / self.period * m as f64;
                let i = (x.floor() as usize).min(m - 1);
                if pattern[i] {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫₀ᵀ u*(τ) e^{iκτ} dτ`.
    pub fn fourier(&self, kappa: f64) -> C64 {
        match &self.shape {
            PulseShape::Cosine => {
                let t = self.period;
                let e = C64::from_polar(1.0, self.theta);
                (e * j_integral(kappa + self.omega, t) + e.conj() * j_integral(kappa - self.omega, t)) * 0.5
            }
            PulseShape::Binary { .. } => self
                .binary_intervals()
                .into_iter()
                .map(|(a, b)| interval_integral(kappa, a, b))
                .sum(),
        }
    }

    /// `∫₀ᵗ |u*|`.
    pub fn abs_integral(&self, t: f64) -> f64 {
        match &self.shape {
            PulseShape::Cosine => {
                (abs_cos_antiderivative(self.omega * t + self.theta) - abs_cos_antiderivative(self.theta))
                    / self.omega
            }
            PulseShape::Binary { .. } => {
                let periods = (t / self.period).floor();
                let rem = t - periods * self.period;
                let ivs = self.binary_intervals();
                let full: f64 = ivs.iter().map(|(a, b)| b - a).sum();
                let part: f64 = ivs.iter().map(|&(a, b)| (rem.min(b) - a).max(0.0)).sum();
                periods * full + part
            }
        }
    }

    /// `I = ∫₀ᵀ |u*|`.
    pub fn period_integral(&self) -> f64 {
        self.abs_integral(self.period)
    }

    /// `|∫₀ᵀ u* e^{iωτ}| / I`.
    pub fn efficiency(&self) -> f64 {
        self.fourier(self.omega).norm() / self.period_integral()
    }

    /// Values of `u*` at step midpoints over one period.
    pub fn period_samples(&self, samples: usize) -> Vec<Step> {
        let h = self.period / samples as f64;
        (0..samples)
            .map(|i| Step {
                duration: h,
                value: self.sample((i as f64 + 0.5) * h),
            })
            .collect()
    }
}

/// `v_n(t) = (1/n) ∫₀ᵗ |u*|`.
pub fn v_n(pulse: &PeriodicPulse, n: usize, t: f64) -> f64 {
    pulse.abs_integral(t) / n as f64
}

/// Smallest `t ≥ 0` with `v_n(t) = v`.
pub fn v_n_inverse(pulse: &PeriodicPulse, n: usize, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let target = v * n as f64;
    let per = pulse.period_integral();
    let periods = (target / per).floor();
    let mut lo = (periods - 1.0).max(0.0) * pulse.period;
    let mut hi = (periods + 1.0) * pulse.period;
    while pulse.abs_integral(hi) < target {
        hi += pulse.period;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pulse.abs_integral(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn is_multiple(gap: f64, omega: f64) -> Option<i64> {
    let k = (gap / omega).round();
    ((gap - k * omega).abs() <= EIGENVALUE_TOL).then_some(k as i64)
}

/// Driven gap `ω = λ₁ − λ₀` with the basic checks.
fn driven_gap(system: &TruncatedSystem) -> Result<f64, AveragingError> {
    let l = system.lambdas();
    let omega = l[1] - l[0];
    if omega <= EIGENVALUE_TOL {
        return Err(AveragingError::NoGap(omega));
    }
    if system.b12().norm() == 0.0 {
        return Err(AveragingError::ZeroCoupling);
    }
    Ok(omega)
}

/// Coupled pairs touching the driven pair whose gap is a multiple `kω`, `k ≠ ±1`.
pub fn orthogonality_pairs(system: &TruncatedSystem, omega: f64) -> Vec<(usize, usize, i64)> {
    let l = system.lambdas();
    let n = system.dimension();
    let mut out = Vec::new();
    for j in 0..n {
        for k in j..n {
            if j > 1 && k > 1 {
                continue;
            }
            if system.coupling(j, k).norm() == 0.0 {
                continue;
            }
            if let Some(m) = is_multiple(l[j] - l[k], omega) {
                if m.abs() != 1 {
                    out.push((j, k, m));
                }
            }
        }
    }
    out
}

fn violations(pulse: &PeriodicPulse, pairs: &[(usize, usize, i64)]) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .filter(|(_, _, m)| pulse.fourier(*m as f64 * pulse.omega).norm() > ORTHOGONALITY_TOL * pulse.period)
        .map(|&(j, k, _)| (j, k))
        .collect()
}

/// Cosine pulse `cos(ωt + θ)` checked against the system's orthogonality pairs.
pub fn design_periodic_pulse(system: &TruncatedSystem, theta: f64) -> Result<PeriodicPulse, AveragingError> {
    design_pulse_with_shape(system, theta, ShapeRequest::Auto)
}

pub fn design_pulse_with_shape(
    system: &TruncatedSystem,
    theta: f64,
    request: ShapeRequest,
) -> Result<PeriodicPulse, AveragingError> {
    let omega = driven_gap(system)?;
    let pairs = orthogonality_pairs(system, omega);
    let cosine = PeriodicPulse::cosine(omega, theta);
    let bad = violations(&cosine, &pairs);
    match request {
        ShapeRequest::Cosine if bad.is_empty() => Ok(cosine),
        ShapeRequest::Cosine => Err(AveragingError::Orthogonality(bad)),
        ShapeRequest::Auto if bad.is_empty() => Ok(cosine),
        _ => design_binary_pulse(system, theta, MAX_BINARY_SLOTS).map_err(|e| match e {
            AveragingError::Orthogonality(_) if !bad.is_empty() => AveragingError::Orthogonality(bad),
            e => e,
        }),
    }
}

/// Most efficient `{0, 1}` slot pattern with at most `max_slots` slots.
pub fn design_binary_pulse(
    system: &TruncatedSystem,
    theta: f64,
    max_slots: usize,
) -> Result<PeriodicPulse, AveragingError> {
    let omega = driven_gap(system)?;
    let pairs = orthogonality_pairs(system, omega);
    let zero_freq: Vec<(usize, usize)> = pairs.iter().filter(|p| p.2 == 0).map(|p| (p.0, p.1)).collect();
    if !zero_freq.is_empty() {
        // A non-negative pulse has positive mean.
        return Err(AveragingError::Orthogonality(zero_freq));
    }
    let mut best: Option<(f64, PeriodicPulse)> = None;
    for m in 1..=max_slots.min(20) {
        for bits in 1u32..(1 << m) {
            let pattern: Vec<bool> = (0..m).map(|i| bits & (1 << i) != 0).collect();
            let p = PeriodicPulse::binary(omega, theta, pattern);
            if !violations(&p, &pairs).is_empty() {
                continue;
            }
            let eff = p.efficiency();
            if eff > 1e-9 && best.as_ref().is_none_or(|(e, _)| eff > *e + 1e-12) {
                best = Some((eff, p));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| AveragingError::Orthogonality(pairs.iter().map(|p| (p.0, p.1)).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingConstants {
    pub omega: f64,
    pub period: f64,
    pub i: f64,
    pub efficiency: f64,
    pub t_star: f64,
    pub k: f64,
    pub c: f64,
    pub m_dagger: ComplexMatrix,
}

/// `I`, efficiency, `T*`, `K`, `C` and the averaged generator `M†`.
///
/// `M†` keeps `b_jk F(λ_j − λ_k) / I` on pairs whose gap is a multiple of
/// `ω` and is zero elsewhere; off-resonant pairs enter only through `C`.
pub fn compute_constants(
    system: &TruncatedSystem,
    pulse: &PeriodicPulse,
) -> Result<AveragingConstants, AveragingError> {
    let omega = driven_gap(system)?;
    let l = system.lambdas();
    let n = system.dimension();
    let t = pulse.period;
    let i = pulse.period_integral();
    let resonant = pulse.fourier(l[0] - l[1]);
    if resonant.norm() <= ORTHOGONALITY_TOL * t {
        return Err(AveragingError::ZeroEfficiency);
    }
    let b12 = system.b12().norm();
    let t_star = PI * t / (2.0 * b12 * resonant.norm());
    let mut c = 0.0f64;
    let mut m = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let b = system.coupling(j, k);
            if b.norm() == 0.0 {
                continue;
            }
            let gap = l[j] - l[k];
            if is_multiple(gap, omega).is_some() {
                m[(j, k)] = b * pulse.fourier(gap) / i;
            } else if j < 2 || k < 2 {
                let ratio = pulse.fourier(gap).norm() / (PI * gap.abs() / omega).sin().abs();
                c = c.max(ratio);
            }
        }
    }
    Ok(AveragingConstants {
        omega,
        period: t,
        i,
        efficiency: pulse.efficiency(),
        t_star,
        k: i * t_star / t,
        c,
        m_dagger: m,
    })
}

/// `I (C + 1) ‖B‖ (1 + 2K‖B‖) / n`.
pub fn error_bound(constants: &AveragingConstants, norm_b: f64, n: usize) -> f64 {
    constants.i * (constants.c + 1.0) * norm_b * (1.0 + 2.0 * constants.k * norm_b) / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptions {
    /// Fixed `n`; chosen from the bound when absent.
    pub n: Option<usize>,
    pub n_max: usize,
    /// Amplitude bound: forces `n ≥ ⌈1/δ⌉`.
    pub delta: f64,
    pub samples_per_period: usize,
    pub shape: ShapeRequest,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            n: None,
            n_max: 100_000,
            delta: 1.0,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            shape: ShapeRequest::Cosine,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracking {
    pub n: usize,
    pub pulse: PeriodicPulse,
    pub constants: AveragingConstants,
    /// Required effective time `v_n(t) = r / efficiency`.
    pub effective_time: f64,
    pub duration: f64,
    pub control: PiecewiseControl,
    pub bound: f64,
    /// `e^{tA} e^{v α M†}` per grid point.
    pub predictions: Vec<UnitaryMatrix>,
}

/// Effective evolution `e^{tA} e^{v α M†}`.
pub fn averaged_propagator(
    system: &TruncatedSystem,
    m_dagger: &ComplexMatrix,
    t: f64,
    v: f64,
    alpha: f64,
) -> Result<UnitaryMatrix, AveragingError> {
    let free = matrix_exp(&system.a().scale_re(t))?;
    let eff = matrix_exp(&m_dagger.scale_re(v * alpha))?;
    Ok(UnitaryMatrix::new(free.try_mul(&eff)?)?)
}

/// Sampled control `u*/n` on `[0, t]`, one compressed block per full period.
pub fn sampled_control(
    pulse: &PeriodicPulse,
    n: usize,
    t: f64,
    samples_per_period: usize,
) -> Result<PiecewiseControl, AveragingError> {
    let mut control = PiecewiseControl::new();
    let scale = 1.0 / n as f64;
    let steps: Vec<Step> = pulse
        .period_samples(samples_per_period)
        .into_iter()
        .map(|s| Step {
            duration: s.duration,
            value: s.value * scale,
        })
        .collect();
    let h = pulse.period / samples_per_period as f64;
    let full = (t / pulse.period).floor();
    control.push_repeated(steps.clone(), full as u64)?;
    let mut start = full * pulse.period;
    let mut i = 0;
    while start < t && i < samples_per_period {
        let d = h.min(t - start);
        if d > 1e-14 * pulse.period {
            control.push(d, pulse.sample(start + 0.5 * d) * scale)?;
        }
        start += h;
        i += 1;
    }
    Ok(control)
}

/// Chooses `n` and `t` so that `u*/n` on `[0, t]` realizes `e^{r M^θ}` on the driven pair.
pub fn track_rotation(
    system: &TruncatedSystem,
    alpha_grid: &[f64],
    theta: f64,
    r: f64,
    epsilon: f64,
    options: &TrackingOptions,
) -> Result<Tracking, AveragingError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(AveragingError::Parameter("rotation must be finite and non-negative"));
    }
    if !(epsilon > 0.0 && options.delta > 0.0 && options.samples_per_period > 0) {
        return Err(AveragingError::Parameter("epsilon, delta and samples must be positive"));
    }
    let pulse = design_pulse_with_shape(system, theta, options.shape)?;
    let constants = compute_constants(system, &pulse)?;
    let norm_b = operator_norm(system.b());
    let min_n = (1.0 / options.delta).ceil().max(1.0) as usize;
    let n = match options.n {
        Some(n) => n.max(1),
        None if r == 0.0 => 1,
        None => {
            // The bound is explicit in 1/n.
            let n_eps = (error_bound(&constants, norm_b, 1) / (epsilon / 2.0)).ceil() as usize;
            let n = n_eps.max(min_n);
            if n > options.n_max {
                return Err(AveragingError::Budget {
                    n_max: options.n_max,
                    achieved: error_bound(&constants, norm_b, options.n_max),
                    wanted: epsilon / 2.0,
                });
            }
            n
        }
    };
    let effective_time = r / constants.efficiency;
    // Window t ≤ nT* read through v_n: its period average at nT* is K.
    if effective_time > constants.k * (1.0 + WINDOW_SLACK) {
        return Err(AveragingError::ValidityWindow {
            r,
            required: effective_time,
            limit: constants.k,
        });
    }
    let duration = v_n_inverse(&pulse, n, effective_time);
    let control = sampled_control(&pulse, n, duration, options.samples_per_period)?;
    let predictions = alpha_grid
        .iter()
        .map(|&a| averaged_propagator(system, &constants.m_dagger, duration, effective_time, a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tracking {
        n,
        bound: error_bound(&constants, norm_b, n),
        pulse,
        constants,
        effective_time,
        duration,
        control,
        predictions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAlignment {
    pub s: f64,
    /// Distance of `λ_j s / 2π` to the nearest integer, per level.
    pub defects: Vec<f64>,
    /// Distance of `s / r*` to the nearest integer.
    pub step_defect: f64,
}

impl PhaseAlignment {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().copied().fold(self.step_defect, f64::max)
    }
}

fn frac_distance(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Smallest `s = k r*`, `k ≥ 1`, with every `λ_j s / 2π` within `ε` of an integer.
pub fn find_phase_alignment(
    lambdas: &[f64],
    rstar: f64,
    epsilon: f64,
    horizon: f64,
) -> Result<PhaseAlignment, AveragingError> {
    find_phase_alignment_after(lambdas, rstar, epsilon, rstar, horizon)
}

/// As [`find_phase_alignment`], restricted to `s ≥ min_time`.
pub fn find_phase_alignment_after(
    lambdas: &[f64],
    rstar: f64,
    epsilon: f64,
    min_time: f64,
    horizon: f64,
) -> Result<PhaseAlignment, AveragingError> {
    if !(rstar > 0.0 && epsilon > 0.0 && horizon > 0.0) {
        return Err(AveragingError::Parameter("r*, epsilon and horizon must be positive"));
    }
    let k0 = ((min_time / rstar) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let k_max = (horizon / rstar * (1.0 + 1e-12)).floor() as u64;
    for k in k0..=k_max {
        let s = k as f64 * rstar;
        let defects: Vec<f64> = lambdas.iter().map(|l| frac_distance(l * s / (2.0 * PI))).collect();
        if defects.iter().all(|d| *d <= epsilon) {
            return Ok(PhaseAlignment {
                s,
                defects,
                step_defect: 0.0,
            });
        }
    }
    Err(AveragingError::NoAlignment(horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotor::build_planar_rotor;
    use crate::spectral::{truncate, SpectralModel};

    fn rotor(n: usize) -> TruncatedSystem {
        truncate(&build_planar_rotor(n).unwrap(), n).unwrap()
    }

    #[test]
    fn cosine_efficiency() {
        for theta in [0.0, 0.4, -2.0] {
            let p = PeriodicPulse::cosine(1.0, theta);
            assert!((p.efficiency() - PI / 4.0).abs() < 1e-12);
            assert!((p.period_integral() - 4.0).abs() < 1e-12);
        }
        let p = PeriodicPulse::cosine(1.0, 0.0);
        assert!((p.fourier(1.0) - C64::new(PI, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fourier_matches_quadrature() {
        let p = PeriodicPulse::cosine(3.0, 0.7);
        for kappa in [-3.0, 0.0, 1.3, 6.0] {
            let h = p.period / 20000.0;
            let q: C64 = (0..20000)
                .map(|i| {
                    let t = (i as f64 + 0.5) * h;
                    C64::from_polar(p.sample(t) * h, kappa * t)
                })
                .sum();
            assert!((q - p.fourier(kappa)).norm() < 1e-7, "κ = {kappa}");
        }
    }

    #[test]
    fn rotor_pulse_accepted() {
        let sys = rotor(7);
        let p = design_periodic_pulse(&sys, 0.0).unwrap();
        assert_eq!(p.shape, PulseShape::Cosine);
        let pairs = orthogonality_pairs(&sys, 1.0);
        assert!(pairs.iter().all(|p| p.2.abs() == 3));
        // two-level: nothing to check
        assert!(orthogonality_pairs(&rotor(2), 1.0).is_empty());
    }

    #[test]
    fn rotor_constants() {
        let sys = rotor(5);
        let c = compute_constants(&sys, &design_periodic_pulse(&sys, 0.0).unwrap()).unwrap();
        assert!((c.i - 4.0).abs() < 1e-12);
        assert!((c.t_star - 2f64.sqrt() * PI).abs() < 1e-12);
        assert!((c.k - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.c, 0.0);
        assert!((c.m_dagger[(0, 1)].norm() - PI / (4.0 * 2f64.sqrt())).abs() < 1e-12);
        let norm_b = operator_norm(sys.b());
        assert!((norm_b - 3f64.sqrt() / 2.0).abs() < 1e-10);
        let e = error_bound(&c, norm_b, 1);
        assert!((e - 2.0 * 3f64.sqrt() * (1.0 + 2.0 * 6f64.sqrt())).abs() < 1e-9, "{e}");
        assert!((error_bound(&c, norm_b, 2) - e / 2.0).abs() < 1e-15);
    }

    #[test]
    fn m_dagger_phase_follows_theta() {
        let sys = rotor(2);
        let theta = 0.9;
        let c = compute_constants(&sys, &PeriodicPulse::cosine(1.0, theta)).unwrap();
        let want = sys.b12() * C64::from_polar(PI / 4.0, theta);
        assert!((c.m_dagger[(0, 1)] - want).norm() < 1e-12);
        assert!(c.m_dagger.skew_hermitian_defect() < 1e-14);
    }

    #[test]
    fn two_level_with_imaginary_unit_coupling() {
        let model = SpectralModel::new(vec![0.0, 2.0], [(0, 1, C64::new(0.0, 1.0))], None).unwrap();
        let sys = truncate(&model, 2).unwrap();
        let c = compute_constants(&sys, &design_periodic_pulse(&sys, 0.0).unwrap()).unwrap();
        assert!((c.m_dagger[(0, 1)].norm() - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn abs_integral_and_inverse() {
        let p = PeriodicPulse::cosine(2.0, 0.3);
        let h = 1e-5;
        let t = 4.1;
        let q: f64 = (0..(t / h) as usize).map(|i| p.sample((i as f64 + 0.5) * h).abs() * h).sum();
        assert!((q - p.abs_integral(t)).abs() < 1e-4);
        for n in [1, 3, 8] {
            let v = v_n(&p, n, t);
            assert!((v_n_inverse(&p, n, v) - t).abs() < 1e-9);
            assert!((v * n as f64 - p.abs_integral(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_pattern_for_rotor() {
        let sys = rotor(5);
        let three = design_binary_pulse(&sys, 0.5, 3).unwrap();
        assert!(matches!(&three.shape, PulseShape::Binary { pattern, .. } if pattern == &[true, false, false]));
        assert!((three.efficiency() - 3.0 * 3f64.sqrt() / (2.0 * PI)).abs() < 1e-12);
        let p = design_binary_pulse(&sys, 0.5, 12).unwrap();
        assert!(p.efficiency() >= three.efficiency() - 1e-12);
        assert!(p.fourier(3.0).norm() < 1e-12);
        // resonant phase is θ
        assert!((p.fourier(-1.0).arg() - 0.5).abs() < 1e-12);
        let c = compute_constants(&sys, &p).unwrap();
        let want = sys.b12() * C64::from_polar(p.efficiency(), 0.5);
        assert!((c.m_dagger[(0, 1)] - want).norm() < 1e-12);
        // mean is positive so diagonal-free rotor still fine
        assert!(p.fourier(0.0).norm() > 0.0);
    }

    #[test]
    fn zero_rotation() {
        let sys = rotor(5);
        let tr = track_rotation(&sys, &[0.0, 1.0], 0.0, 0.0, 0.1, &TrackingOptions::default()).unwrap();
        assert_eq!(tr.n, 1);
        assert!(tr.control.is_empty());
        for p in &tr.predictions {
            assert!((p.as_matrix() - &ComplexMatrix::identity(5)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn full_transfer_sits_on_window() {
        let sys = rotor(5);
        let r = PI / 2f64.sqrt();
        let opts = TrackingOptions {
            n: Some(4),
            ..Default::default()
        };
        let tr = track_rotation(&sys, &[1.0], 0.0, r, 0.1, &opts).unwrap();
        assert!((v_n(&tr.pulse, 4, tr.duration) - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!((tr.duration / (4.0 * tr.constants.t_star) - 1.0).abs() < 0.05);
        let over = track_rotation(&sys, &[1.0], 0.0, r * 1.01, 0.1, &opts);
        assert!(matches!(over, Err(AveragingError::ValidityWindow { .. })));
        assert!(tr.control.max_abs_value() <= 0.25);
        assert!((tr.control.total_duration() - tr.duration).abs() < 1e-9);
        // α = 1 prediction is a full transfer on the driven pair
        assert!(tr.predictions[0].as_matrix()[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn automatic_n_from_bound() {
        let sys = rotor(5);
        let tr = track_rotation(&sys, &[], 0.0, 0.5, 1.0, &TrackingOptions::default()).unwrap();
        assert_eq!(tr.n, 41);
        assert!(tr.bound <= 0.5);
        let opts = TrackingOptions {
            n_max: 10,
            ..Default::default()
        };
        assert!(matches!(
            track_rotation(&sys, &[], 0.0, 0.5, 1.0, &opts),
            Err(AveragingError::Budget { .. })
        ));
    }

    #[test]
    fn phase_alignment_examples() {
        let a = find_phase_alignment(&[0.0, 1.0], 2.0 * PI, 1e-12, 100.0).unwrap();
        assert!((a.s - 2.0 * PI).abs() < 1e-12);
        assert!(a.max_defect() < 1e-12);
        let b = find_phase_alignment(&[0.0, 1.0, 4.0, 9.0], 1.0, 0.05, 1000.0).unwrap();
        assert_eq!(b.s, 44.0);
        assert!(find_phase_alignment(&[0.0, 1.0], 1.0, 1e-9, 10.0).is_err());
    }
}
