//! Spectral description of a bilinear system `x' = (A + u α B) x`.
//!
//! `A` is diagonal in the eigenbasis, `A φ_j = −i λ_j φ_j`, and `B` is given
//! through its matrix elements `b_jk = ⟨φ_j, B φ_k⟩`. Levels are indexed from
//! zero; levels 0 and 1 are the driven pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{operator_norm, ComplexMatrix, SkewHermitianMatrix, C64};
use crate::rotor;

/// Absolute tolerance for comparing eigenvalues and gaps.
pub const EIGENVALUE_TOL: f64 = 1e-9;
/// Couplings below this modulus count as zero.
pub const COUPLING_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("model has fewer than two levels")]
    Empty,
    #[error("coupling index ({0}, {1}) outside the model")]
    IndexOutOfRange(usize, usize),
    #[error("couplings ({0}, {1}) and ({1}, {0}) violate b_kj = -conj(b_jk)")]
    NotSkew(usize, usize),
    #[error("coupling ({0}, {1}) lies outside the declared band limit {2}")]
    BandViolation(usize, usize, usize),
    #[error("non-finite value in model data")]
    NonFinite,
    #[error("truncation dimension {0} is below 2")]
    TooSmall(usize),
    #[error("truncation dimension {n} exceeds the declared range {dimension}")]
    OutOfRange { n: usize, dimension: usize },
    #[error("model has neither a band limit nor a finite range; tail norm is not computable")]
    UnboundedTail,
    #[error("no truncation with tail norm below {threshold:e} within the declared range")]
    NoTruncation { threshold: f64 },
    #[error("invalid model document: {0}")]
    Format(String),
}

/// Rule that can regenerate a model at any dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    PlanarRotor,
}

/// Whether the stored levels are the whole system or a prefix of a
/// generated family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extent {
    Finite,
    Generated(Generator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    lambdas: Vec<f64>,
    // Both triangles are stored; zero couplings are omitted.
    couplings: BTreeMap<(usize, usize), C64>,
    band_limit: Option<usize>,
    extent: Extent,
}

impl SpectralModel {
    /// Builds a finite model. Each coupling `(j, k, b)` also fixes its
    /// mirror `(k, j) = -conj(b)`; giving both is allowed if they agree.
    pub fn new(
        lambdas: Vec<f64>,
        couplings: impl IntoIterator<Item = (usize, usize, C64)>,
        band_limit: Option<usize>,
    ) -> Result<Self, SpectralError> {
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let dim = lambdas.len();
        let mut map: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (j, k, b) in couplings {
            if j >= dim || k >= dim {
                return Err(SpectralError::IndexOutOfRange(j, k));
            }
            if !b.re.is_finite() || !b.im.is_finite() {
                return Err(SpectralError::NonFinite);
            }
            if b.norm() <= COUPLING_TOL {
                continue;
            }
            if let Some(w) = band_limit {
                if j.abs_diff(k) > w {
                    return Err(SpectralError::BandViolation(j, k, w));
                }
            }
            let mirror = -b.conj();
            if j == k && (b - mirror).norm() > COUPLING_TOL {
                return Err(SpectralError::NotSkew(j, k));
            }
            for (key, val) in [((j, k), b), ((k, j), mirror)] {
                match map.get(&key) {
                    Some(prev) if (prev - val).norm() > COUPLING_TOL * (1.0 + val.norm()) => {
                        return Err(SpectralError::NotSkew(j, k));
                    }
                    _ => {
                        map.insert(key, val);
                    }
                }
            }
        }
        Ok(Self {
            lambdas,
            couplings: map,
            band_limit,
            extent: Extent::Finite,
        })
    }

    /// Marks the model as a prefix of a generated family.
    pub fn with_extent(mut self, extent: Extent) -> Self {
        self.extent = extent;
        self
    }

    pub fn without_band_limit(mut self) -> Self {
        self.band_limit = None;
        self
    }

    pub fn dimension(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn band_limit(&self) -> Option<usize> {
        self.band_limit
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn coupling(&self, j: usize, k: usize) -> C64 {
        self.couplings
            .get(&(j, k))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// Nonzero couplings in index order, both triangles.
    pub fn couplings(&self) -> impl Iterator<Item = ((usize, usize), C64)> + '_ {
        self.couplings.iter().map(|(k, v)| (*k, *v))
    }

    pub fn b12(&self) -> C64 {
        self.coupling(0, 1)
    }

    /// Applies eigenvector phase changes `φ_j → e^{iσ_j} φ_j`.
    pub fn rephased(&self, sigma: &[f64]) -> Self {
        let mut out = self.clone();
        for ((j, k), b) in out.couplings.iter_mut() {
            let sj = sigma.get(*j).copied().unwrap_or(0.0);
            let sk = sigma.get(*k).copied().unwrap_or(0.0);
            *b *= C64::from_polar(1.0, sj - sk);
        }
        out
    }

    /// The model covering at least `n` levels: generated families are
    /// regenerated, finite models are returned as-is.
    fn materialized(&self, n: usize) -> Self {
        match self.extent {
            Extent::Generated(Generator::PlanarRotor) if n > self.dimension() => {
                let mut m = rotor::build_planar_rotor(n).expect("rotor generation with n >= 2");
                m.band_limit = self.band_limit;
                m
            }
            _ => self.clone(),
        }
    }

    /// Dense matrix of `b_jk` over the given index ranges.
    pub fn coupling_block(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> ComplexMatrix {
        let full = self.materialized(rows.end.max(cols.end));
        let mut m = ComplexMatrix::zeros(rows.len().max(1), cols.len().max(1));
        for (a, j) in rows.clone().enumerate() {
            for (c, k) in cols.clone().enumerate() {
                m[(a, c)] = full.coupling(j, k);
            }
        }
        m
    }

    /// Largest index the tail computation has to look at, if one exists.
    fn tail_extent(&self) -> Result<usize, SpectralError> {
        match (self.extent, self.band_limit) {
            (Extent::Finite, _) => Ok(self.dimension()),
            (Extent::Generated(_), Some(w)) => Ok(self.dimension().max(2 + w)),
            (Extent::Generated(_), None) => Err(SpectralError::UnboundedTail),
        }
    }
}

/// Which hypothesis a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionItem {
    /// λ₁ < λ₂ for the driven pair.
    Ordering,
    /// ⟨φ₁, B φ₂⟩ ≠ 0.
    Coupling,
    /// No other coupled transition shares the driven gap with a driven level.
    NonDegeneracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub item: AssumptionItem,
    /// Offending zero-based level pairs.
    pub indices: Vec<(usize, usize)>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }
}

/// Groups level indices into eigenspaces of equal λ (within [`EIGENVALUE_TOL`]).
/// Returns `(representative λ, member indices)` sorted by λ.
pub fn eigenspaces(lambdas: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]).then(a.cmp(&b)));
    let mut spaces: Vec<(f64, Vec<usize>)> = Vec::new();
    for idx in order {
        match spaces.last_mut() {
            Some((mu, members)) if (lambdas[idx] - *mu).abs() <= EIGENVALUE_TOL => {
                members.push(idx)
            }
            _ => spaces.push((lambdas[idx], vec![idx])),
        }
    }
    spaces
}

/// Checks the driven-pair hypotheses over the stored levels.
pub fn validate_assumptions(model: &SpectralModel) -> Result<ValidationReport, SpectralError> {
    if model.dimension() < 2 {
        return Err(SpectralError::Empty);
    }
    let lam = model.lambdas();
    let mut violations = Vec::new();

    if lam[1] - lam[0] <= EIGENVALUE_TOL {
        violations.push(Violation {
            item: AssumptionItem::Ordering,
            indices: vec![(0, 1)],
            message: format!("need λ0 < λ1, got λ0 = {} and λ1 = {}", lam[0], lam[1]),
        });
    }
    if model.b12().norm() <= COUPLING_TOL {
        violations.push(Violation {
            item: AssumptionItem::Coupling,
            indices: vec![(0, 1)],
            message: "driven pair is uncoupled: b(0,1) = 0".into(),
        });
    }

    let gap = (lam[1] - lam[0]).abs();
    if gap > EIGENVALUE_TOL {
        let spaces = eigenspaces(lam);
        let space_of = |idx: usize| spaces.iter().position(|(_, m)| m.contains(&idx)).unwrap();
        let (s0, s1) = (space_of(0), space_of(1));
        for p in 0..spaces.len() {
            for q in p + 1..spaces.len() {
                if ((spaces[q].0 - spaces[p].0).abs() - gap).abs() > EIGENVALUE_TOL {
                    continue;
                }
                let same_pair = (p == s0 && q == s1) || (p == s1 && q == s0);
                let disjoint = ![s0, s1].contains(&p) && ![s0, s1].contains(&q);
                if same_pair || disjoint {
                    continue;
                }
                let offending: Vec<(usize, usize)> = spaces[p]
                    .1
                    .iter()
                    .flat_map(|&a| spaces[q].1.iter().map(move |&b| (a.min(b), a.max(b))))
                    .filter(|&(a, b)| model.coupling(a, b).norm() > COUPLING_TOL)
                    .collect();
                if !offending.is_empty() {
                    violations.push(Violation {
                        item: AssumptionItem::NonDegeneracy,
                        indices: offending,
                        message: format!(
                            "transition λ = {} ↔ {} shares the driven gap {} and touches a driven level",
                            spaces[p].0, spaces[q].0, gap
                        ),
                    });
                }
            }
        }
    }
    Ok(ValidationReport::from_violations(violations))
}

/// Galerkin compression of the model onto its first `n` levels.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSystem {
    lambdas: Vec<f64>,
    a: SkewHermitianMatrix,
    b: SkewHermitianMatrix,
}

impl TruncatedSystem {
    pub fn dimension(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Diagonal drift `diag(−i λ_j)`.
    pub fn a(&self) -> &ComplexMatrix {
        self.a.as_matrix()
    }

    pub fn b(&self) -> &ComplexMatrix {
        self.b.as_matrix()
    }

    pub fn b12(&self) -> C64 {
        self.b()[(0, 1)]
    }

    pub fn coupling(&self, j: usize, k: usize) -> C64 {
        self.b()[(j, k)]
    }
}

pub fn truncate(model: &SpectralModel, n: usize) -> Result<TruncatedSystem, SpectralError> {
    if n < 2 {
        return Err(SpectralError::TooSmall(n));
    }
    let full = match model.extent {
        Extent::Finite if n > model.dimension() => {
            return Err(SpectralError::OutOfRange {
                n,
                dimension: model.dimension(),
            })
        }
        _ => model.materialized(n),
    };
    let lambdas = full.lambdas[..n].to_vec();
    let diag: Vec<C64> = lambdas.iter().map(|l| C64::new(0.0, -l)).collect();
    let a = SkewHermitianMatrix::new(ComplexMatrix::from_diag(&diag))
        .expect("diagonal of -i*lambda is skew-Hermitian");
    let b = SkewHermitianMatrix::new(full.coupling_block(0..n, 0..n))
        .map_err(|_| SpectralError::NotSkew(0, 0))?;
    Ok(TruncatedSystem { lambdas, a, b })
}

/// `‖π₂ B (1 − π_N)‖`: norm of the couplings from the driven pair to levels `≥ n`.
pub fn tail_norm(model: &SpectralModel, n: usize) -> Result<f64, SpectralError> {
    if n < 2 {
        return Err(SpectralError::TooSmall(n));
    }
    let end = model.tail_extent()?;
    if n >= end {
        return Ok(0.0);
    }
    Ok(operator_norm(&model.coupling_block(0..2, n..end)))
}

/// `‖π_N B (1 − π_N)‖` restricted to levels below `end`.
pub fn interior_tail_norm(model: &SpectralModel, n: usize, end: usize) -> f64 {
    if n >= end {
        return 0.0;
    }
    operator_norm(&model.coupling_block(0..n, n..end))
}

/// Default tail threshold `5ε / (2r)`.
pub fn default_tail_threshold(epsilon: f64, r: f64) -> f64 {
    5.0 * epsilon / (2.0 * r)
}

/// Smallest `N ≥ 2` with `tail_norm(N) < 5ε/(2r)`.
pub fn truncation_rank(model: &SpectralModel, epsilon: f64, r: f64) -> Result<usize, SpectralError> {
    truncation_rank_with_threshold(model, default_tail_threshold(epsilon, r))
}

pub fn truncation_rank_with_threshold(
    model: &SpectralModel,
    threshold: f64,
) -> Result<usize, SpectralError> {
    let end = model.tail_extent()?;
    for n in 2..=end.max(2) {
        if tail_norm(model, n)? < threshold {
            return Ok(n);
        }
    }
    Err(SpectralError::NoTruncation { threshold })
}

/// On-disk model document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// `[j, k, re, im]`, zero-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<SpectralModel, SpectralError> {
        if let Some(Generator::PlanarRotor) = self.generator {
            let n = self.dimension.unwrap_or(rotor::DEFAULT_ROTOR_DIMENSION);
            let model = rotor::build_planar_rotor(n)
                .map_err(|e| SpectralError::Format(e.to_string()))?;
            return Ok(if self.dimension.is_none() {
                model.with_extent(Extent::Generated(Generator::PlanarRotor))
            } else {
                model
            });
        }
        let lambdas = self
            .lambdas
            .ok_or_else(|| SpectralError::Format("missing `lambdas`".into()))?;
        let mut entries = Vec::new();
        for [j, k, re, im] in self.couplings.unwrap_or_default() {
            let idx = |x: f64| -> Result<usize, SpectralError> {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(SpectralError::Format(format!("coupling index {x} is not a level")))
                }
            };
            entries.push((idx(j)?, idx(k)?, C64::new(re, im)));
        }
        SpectralModel::new(lambdas, entries, self.band_limit)
    }

    /// Explicit document listing every level and the upper-triangle couplings.
    pub fn from_model(model: &SpectralModel) -> Self {
        let couplings = model
            .couplings()
            .filter(|((j, k), _)| j <= k)
            .map(|((j, k), b)| [j as f64, k as f64, b.re, b.im])
            .collect();
        Self {
            lambdas: Some(model.lambdas().to_vec()),
            couplings: Some(couplings),
            band_limit: model.band_limit(),
            generator: None,
            dimension: None,
        }
    }
}

pub fn model_from_json(text: &str) -> Result<SpectralModel, SpectralError> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| SpectralError::Format(e.to_string()))?;
    doc.into_model()
}

pub fn model_to_json(model: &SpectralModel) -> String {
    serde_json::to_string_pretty(&ModelDocument::from_model(model))
        .expect("model document serializes")
}
