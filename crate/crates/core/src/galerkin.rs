//! Propagators of truncated systems under piecewise-constant controls.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{matrix_exp, operator_norm, ComplexMatrix, LinalgError, UnitaryMatrix};
use crate::spectral::{interior_tail_norm, tail_norm, truncate, SpectralError, SpectralModel, TruncatedSystem};
use crate::target::ModulusTarget;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("α = {0} lies outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("control step {index} has invalid duration {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("control value {value} exceeds bound {bound}")]
    AmplitudeBound { value: f64, bound: f64 },
    #[error("control value is not finite")]
    NonFinite,
    #[error("need 2 <= N < Nbig, got N = {n}, Nbig = {nbig}")]
    Dimensions { n: usize, nbig: usize },
    #[error("M† has shape {got:?}, expected {want}x{want}")]
    EffectiveShape { got: (usize, usize), want: usize },
    #[error("control file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub duration: f64,
    pub value: f64,
}

/// A run of steps applied `repeat` times in a row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBlock {
    pub steps: Vec<Step>,
    pub repeat: u64,
}

impl ControlBlock {
    fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum::<f64>() * self.repeat as f64
    }
}

/// One expanded schedule record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub t_start: f64,
    pub duration: f64,
    pub value: f64,
}

/// Piecewise-constant control stored run-length compressed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseControl {
    blocks: Vec<ControlBlock>,
}

impl PiecewiseControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_steps(steps: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, SimError> {
        let mut c = Self::new();
        for (d, v) in steps {
            c.push(d, v)?;
        }
        Ok(c)
    }

    fn check(index: usize, step: &Step) -> Result<(), SimError> {
        if !(step.duration.is_finite() && step.duration > 0.0) {
            return Err(SimError::BadDuration {
                index,
                duration: step.duration,
            });
        }
        if !step.value.is_finite() {
            return Err(SimError::NonFinite);
        }
        Ok(())
    }

    /// Appends one step; zero durations are dropped.
    pub fn push(&mut self, duration: f64, value: f64) -> Result<(), SimError> {
        if duration == 0.0 {
            return Ok(());
        }
        let step = Step { duration, value };
        Self::check(0, &step).map_err(|_| Self::check(self.step_count(), &step).unwrap_err())?;
        match self.blocks.last_mut() {
            Some(b) if b.repeat == 1 => b.steps.push(step),
            _ => self.blocks.push(ControlBlock {
                steps: vec![step],
                repeat: 1,
            }),
        }
        Ok(())
    }

    /// Appends `steps` repeated `repeat` times.
    pub fn push_repeated(&mut self, steps: Vec<Step>, repeat: u64) -> Result<(), SimError> {
        if repeat == 0 || steps.is_empty() {
            return Ok(());
        }
        for (i, s) in steps.iter().enumerate() {
            Self::check(0, s).map_err(|_| Self::check(self.step_count() + i, s).unwrap_err())?;
        }
        self.blocks.push(ControlBlock { steps, repeat });
        Ok(())
    }

    /// Free evolution for `duration`.
    pub fn push_pause(&mut self, duration: f64) -> Result<(), SimError> {
        self.push(duration, 0.0)
    }

    pub fn append(&mut self, other: &PiecewiseControl) {
        for b in &other.blocks {
            if b.repeat == 1 {
                for s in &b.steps {
                    self.push(s.duration, s.value).expect("already validated");
                }
            } else {
                self.blocks.push(b.clone());
            }
        }
    }

    pub fn blocks(&self) -> &[ControlBlock] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of expanded steps.
    pub fn step_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.steps.len() * b.repeat as usize)
            .sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.blocks.iter().map(ControlBlock::duration).sum()
    }

    pub fn max_abs_value(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.steps.iter())
            .map(|s| s.value.abs())
            .fold(0.0, f64::max)
    }

    /// `∫|u|`.
    pub fn abs_integral(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.steps.iter().map(|s| s.duration * s.value.abs()).sum::<f64>() * b.repeat as f64)
            .sum()
    }

    pub fn check_bound(&self, bound: f64) -> Result<(), SimError> {
        let m = self.max_abs_value();
        if m > bound * (1.0 + 1e-12) {
            return Err(SimError::AmplitudeBound { value: m, bound });
        }
        Ok(())
    }

    /// Expanded `(t_start, duration, value)` records.
    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        let mut t = 0.0;
        self.blocks
            .iter()
            .flat_map(|b| (0..b.repeat).flat_map(move |_| b.steps.iter()))
            .map(move |s| {
                let r = Record {
                    t_start: t,
                    duration: s.duration,
                    value: s.value,
                };
                t += s.duration;
                r
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_start,duration,value\n");
        for r in self.records() {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", r.t_start, r.duration, r.value).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut c = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("t_start")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(SimError::Parse {
                    line: i + 1,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| SimError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            };
            let (d, v) = (parse(fields[1])?, parse(fields[2])?);
            c.push(d, v)?;
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("control serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let c: Self = serde_json::from_str(text).map_err(|e| SimError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut index = 0;
        for b in &c.blocks {
            for s in &b.steps {
                Self::check(index, s)?;
                index += 1;
            }
        }
        Ok(c)
    }
}

/// Step exponentials of one system at one `α`, keyed by the exact bits of
/// `(duration, value)` so repeated steps are computed once.
pub struct Propagator<'a> {
    system: &'a TruncatedSystem,
    alpha: f64,
    map: HashMap<(u64, u64), ComplexMatrix>,
}

impl<'a> Propagator<'a> {
    pub fn new(system: &'a TruncatedSystem, alpha: f64) -> Result<Self, SimError> {
        check_alpha(alpha)?;
        Ok(Self {
            system,
            alpha,
            map: HashMap::new(),
        })
    }

    fn step(&mut self, s: &Step) -> Result<&ComplexMatrix, SimError> {
        let key = (s.duration.to_bits(), s.value.to_bits());
        if !self.map.contains_key(&key) {
            let g = self
                .system
                .a()
                .try_add(&self.system.b().scale_re(s.value * self.alpha))?
                .scale_re(s.duration);
            self.map.insert(key, matrix_exp(&g)?);
        }
        Ok(&self.map[&key])
    }

    /// Propagator of `control`, as a plain matrix.
    pub fn apply(&mut self, control: &PiecewiseControl) -> Result<ComplexMatrix, SimError> {
        let n = self.system.dimension();
        let mut u = ComplexMatrix::identity(n);
        for block in control.blocks() {
            let mut p = ComplexMatrix::identity(n);
            for s in &block.steps {
                p = self.step(s)?.try_mul(&p)?;
            }
            u = p.powi(block.repeat)?.try_mul(&u)?;
        }
        Ok(u)
    }
}

fn check_alpha(alpha: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SimError::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Time-ordered product of `exp(d (A + v α B))`.
pub fn propagate(
    system: &TruncatedSystem,
    control: &PiecewiseControl,
    alpha: f64,
) -> Result<UnitaryMatrix, SimError> {
    let u = Propagator::new(system, alpha)?.apply(control)?;
    Ok(UnitaryMatrix::new(u)?)
}

/// `propagate` over a grid, in grid order.
pub fn ensemble_propagate(
    system: &TruncatedSystem,
    control: &PiecewiseControl,
    alpha_grid: &[f64],
) -> Result<Vec<UnitaryMatrix>, SimError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        alpha_grid
            .par_iter()
            .map(|&a| propagate(system, control, a))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        alpha_grid
            .iter()
            .map(|&a| propagate(system, control, a))
            .collect()
    }
}

/// `n` equispaced points in `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// `|⟨φ_j, U φ_k⟩|` for `j, k ∈ {0, 1}`, row-major.
pub fn driven_moduli(u: &ComplexMatrix) -> [f64; 4] {
    [u[(0, 0)].norm(), u[(0, 1)].norm(), u[(1, 0)].norm(), u[(1, 1)].norm()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub alpha_grid: Vec<f64>,
    pub moduli: Vec<[f64; 4]>,
    pub targets: Vec<[f64; 4]>,
    pub per_alpha_error: Vec<f64>,
    pub sup_error: f64,
}

impl EnsembleReport {
    pub fn new(alpha_grid: &[f64], moduli: Vec<[f64; 4]>, targets: Vec<[f64; 4]>) -> Self {
        let per_alpha_error: Vec<f64> = moduli
            .iter()
            .zip(&targets)
            .map(|(m, t)| m.iter().zip(t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        let sup_error = per_alpha_error.iter().copied().fold(0.0, f64::max);
        Self {
            alpha_grid: alpha_grid.to_vec(),
            moduli,
            targets,
            per_alpha_error,
            sup_error,
        }
    }

    /// Moduli of simulated propagators against a modulus target.
    pub fn from_propagators(alpha_grid: &[f64], props: &[UnitaryMatrix], target: &ModulusTarget) -> Self {
        let moduli = props.iter().map(|u| driven_moduli(u.as_matrix())).collect();
        let targets = alpha_grid.iter().map(|&a| target.moduli_table(a)).collect();
        Self::new(alpha_grid, moduli, targets)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,m11,m12,m21,m22,t11,t12,t21,t22,err\n");
        for i in 0..self.alpha_grid.len() {
            let m = self.moduli[i];
            let t = self.targets[i];
            writeln!(
                out,
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.alpha_grid[i], m[0], m[1], m[2], m[3], t[0], t[1], t[2], t[3], self.per_alpha_error[i]
            )
            .unwrap();
        }
        out
    }

    /// Largest row or column ℓ² norm of the moduli tables.
    pub fn max_line_norm(&self) -> f64 {
        self.moduli
            .iter()
            .flat_map(|m| {
                [
                    m[0].hypot(m[1]),
                    m[2].hypot(m[3]),
                    m[0].hypot(m[2]),
                    m[1].hypot(m[3]),
                ]
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConsistency {
    /// `‖π₂ X_Nbig π₂ − π₂ X_N π₂‖`
    pub distance: f64,
    /// `‖π₂ B (1 − π_N)‖`
    pub tail: f64,
    /// `‖π_N B (π_Nbig − π_N)‖`
    pub interior: f64,
    /// Largest distance of the N-level propagator to its π₂-commuting reference.
    pub e_sup: f64,
    /// `∫|u|`
    pub abs_integral: f64,
    /// `α ∫|u| (tail + 4 e_sup interior)`
    pub bound: f64,
}

/// Compares the driven block of two truncations under the same control.
///
/// The reference is `e^{tA} e^{v(t) α M†}` with `v(t) = ∫₀ᵗ|u|`, or free
/// evolution when `m_dagger` is `None`.
pub fn truncation_consistency(
    model: &SpectralModel,
    control: &PiecewiseControl,
    alpha: f64,
    n: usize,
    nbig: usize,
    m_dagger: Option<&ComplexMatrix>,
) -> Result<TruncationConsistency, SimError> {
    check_alpha(alpha)?;
    if n < 2 || nbig <= n {
        return Err(SimError::Dimensions { n, nbig });
    }
    let small = truncate(model, n)?;
    let big = truncate(model, nbig)?;
    if let Some(m) = m_dagger {
        if m.dim() != (n, n) {
            return Err(SimError::EffectiveShape { got: m.dim(), want: n });
        }
    }
    let mut cs = Propagator::new(&small, alpha)?;
    let mut cb = Propagator::new(&big, alpha)?;
    let mut us = ComplexMatrix::identity(n);
    let mut ub = ComplexMatrix::identity(nbig);
    let (mut t, mut v, mut e_sup) = (0.0, 0.0, 0.0f64);
    for r in control.records() {
        let s = Step {
            duration: r.duration,
            value: r.value,
        };
        us = cs.step(&s)?.try_mul(&us)?;
        ub = cb.step(&s)?.try_mul(&ub)?;
        t += r.duration;
        v += r.duration * r.value.abs();
        let free = matrix_exp(&small.a().scale_re(t))?;
        let reference = match m_dagger {
            Some(m) => free.try_mul(&matrix_exp(&m.scale_re(v * alpha))?)?,
            None => free,
        };
        e_sup = e_sup.max(operator_norm(&us.try_sub(&reference)?));
    }
    let distance = operator_norm(&ub.block(0, 0, 2, 2).try_sub(&us.block(0, 0, 2, 2))?);
    let tail = tail_norm(model, n)?;
    let interior = interior_tail_norm(model, n, nbig);
    let abs_integral = control.abs_integral();
    Ok(TruncationConsistency {
        distance,
        tail,
        interior,
        e_sup,
        abs_integral,
        bound: alpha * abs_integral * (tail + 4.0 * e_sup * interior),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::rotor::build_planar_rotor;

    fn rotor(n: usize) -> TruncatedSystem {
        truncate(&build_planar_rotor(n).unwrap(), n).unwrap()
    }

    #[test]
    fn zero_control_is_free_evolution() {
        let sys = rotor(5);
        let c = PiecewiseControl::from_steps([(1.5, 0.0), (0.5, 0.0)]).unwrap();
        let u = propagate(&sys, &c, 0.7).unwrap();
        for j in 0..5 {
            let want = C64::from_polar(1.0, -sys.lambdas()[j] * 2.0);
            assert!((u.as_matrix()[(j, j)] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_ignores_control() {
        let sys = rotor(5);
        let c = PiecewiseControl::from_steps([(0.3, 0.9), (0.7, -0.4)]).unwrap();
        let u = propagate(&sys, &c, 0.0).unwrap();
        let free = matrix_exp(&sys.a().scale_re(1.0)).unwrap();
        assert!((u.as_matrix() - &free).max_abs() < 1e-13);
    }

    #[test]
    fn repeated_block_equals_expansion() {
        let sys = rotor(5);
        let steps = vec![
            Step { duration: 0.2, value: 0.3 },
            Step { duration: 0.1, value: -0.5 },
        ];
        let mut packed = PiecewiseControl::new();
        packed.push(0.05, 0.1).unwrap();
        packed.push_repeated(steps.clone(), 37).unwrap();
        packed.push(0.05, 0.2).unwrap();
        let flat = PiecewiseControl::from_steps(packed.records().map(|r| (r.duration, r.value))).unwrap();
        assert_eq!(flat.step_count(), 76);
        let a = propagate(&sys, &packed, 0.8).unwrap();
        let b = propagate(&sys, &flat, 0.8).unwrap();
        assert!((a.as_matrix() - b.as_matrix()).max_abs() < 1e-11);
    }

    #[test]
    fn csv_round_trip() {
        let c = PiecewiseControl::from_steps([(0.1, 0.25), (0.2, -1.0 / 3.0)]).unwrap();
        let back = PiecewiseControl::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
        assert!(PiecewiseControl::from_csv("t_start,duration,value\n0,-1,0\n").is_err());
        assert!(PiecewiseControl::from_csv("0,1\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut c = PiecewiseControl::new();
        c.push_repeated(vec![Step { duration: 0.5, value: 0.1 }], 9).unwrap();
        assert_eq!(PiecewiseControl::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn ensemble_endpoints_match_direct_calls() {
        let sys = rotor(5);
        let c = PiecewiseControl::from_steps([(0.4, 0.2), (0.9, -0.3)]).unwrap();
        let all = ensemble_propagate(&sys, &c, &[0.0, 1.0]).unwrap();
        assert_eq!(all[0], propagate(&sys, &c, 0.0).unwrap());
        assert_eq!(all[1], propagate(&sys, &c, 1.0).unwrap());
    }

    #[test]
    fn zero_control_consistency_is_zero() {
        let model = build_planar_rotor(9).unwrap();
        let c = PiecewiseControl::from_steps([(3.0, 0.0)]).unwrap();
        let r = truncation_consistency(&model, &c, 1.0, 4, 9, None).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.tail, 0.0);
    }

    #[test]
    fn report_errors_and_csv() {
        let grid = uniform_grid(3);
        let target = ModulusTarget::Identity;
        let sys = rotor(2);
        let props = ensemble_propagate(&sys, &PiecewiseControl::new(), &grid).unwrap();
        let rep = EnsembleReport::from_propagators(&grid, &props, &target);
        assert!(rep.sup_error < 1e-15);
        assert!(rep.max_line_norm() <= 1.0 + 1e-8);
        let csv = rep.to_csv();
        assert!(csv.starts_with("alpha,m11,m12,m21,m22,t11,t12,t21,t22,err\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn amplitude_bound() {
        let c = PiecewiseControl::from_steps([(1.0, 0.2)]).unwrap();
        assert!(c.check_bound(0.2).is_ok());
        assert!(c.check_bound(0.1).is_err());
    }
}
