//! Config-driven chain from a model and a modulus target to a simulated
//! control: validation, truncation, odd fit, bracket synthesis, one
//! averaging stage per pulse-train segment, phase-alignment pauses and an
//! ensemble simulation.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::averaging::{
    averaged_propagator, find_phase_alignment_after, track_rotation, AveragingConstants,
    AveragingError, ShapeRequest, TrackingOptions, DEFAULT_SAMPLES_PER_PERIOD,
};
use crate::galerkin::{driven_moduli, uniform_grid, EnsembleReport, PiecewiseControl, Propagator, SimError};
use crate::linalg::{operator_norm, ComplexMatrix, LinalgError};
use crate::spectral::{
    default_tail_threshold, tail_norm, truncate, truncation_rank_with_threshold, validate_assumptions,
    Extent, ModelDocument, SpectralError, SpectralModel, TruncatedSystem, ValidationReport,
};
use crate::su2::{
    evaluate_pulse_train, fit_odd_angle_curve, program_from_curve, synthesize_pulse_train, AuxGenerator,
    BracketTerm, FitResult, Letter, PulseTrain, Su2Error,
};
use crate::target::ModulusTarget;

/// Process exit statuses of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    Io,
    Validation,
    FitUnreachable,
    BudgetExhausted,
    ValidityWindow,
    PhaseAlignment,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::Io => 1,
            Self::Validation => 2,
            Self::FitUnreachable => 3,
            Self::BudgetExhausted => 4,
            Self::ValidityWindow => 5,
            Self::PhaseAlignment => 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Io(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model fails the assumptions: {0:?}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Su2(#[from] Su2Error),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl PipelineError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            Self::Spectral(SpectralError::Format(_)) => ExitStatus::Io,
            Self::Validation(_) | Self::Spectral(_) => ExitStatus::Validation,
            Self::Averaging(AveragingError::ValidityWindow { .. }) => ExitStatus::ValidityWindow,
            Self::Averaging(AveragingError::NoAlignment(_)) => ExitStatus::PhaseAlignment,
            Self::Averaging(AveragingError::Budget { .. }) => ExitStatus::BudgetExhausted,
            Self::Averaging(AveragingError::Orthogonality(_) | AveragingError::ZeroCoupling) => {
                ExitStatus::Validation
            }
            _ => ExitStatus::Io,
        }
    }
}

/// Model file, or an inline model document (including `generator` presets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File { file: PathBuf },
    Inline(ModelDocument),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 21 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub degree_cap: usize,
    pub samples: usize,
    /// Sup tolerance on the rotation angle.
    pub tolerance: f64,
    pub select: DegreeRule,
}

/// How the fit degree is picked below the cap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeRule {
    /// Smallest sup angle error.
    FitError,
    /// Smallest two-level moduli error of the synthesized train on the grid.
    #[default]
    AuxError,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            degree_cap: 9,
            samples: 201,
            tolerance: 1e-3,
            select: DegreeRule::AuxError,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub horizon: f64,
    pub slices: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            slices: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingConfig {
    /// Fixed `n` for every stage; otherwise chosen from the bound.
    pub n: Option<usize>,
    pub n_max: usize,
    pub samples_per_period: usize,
    pub shape: ShapeRequest,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            n: None,
            n_max: 100_000,
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            shape: ShapeRequest::Cosine,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_stages: usize,
    pub max_steps: u64,
    pub max_duration: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            max_stages: 100_000,
            max_steps: 2_000_000_000,
            max_duration: 1e12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub epsilon: f64,
    /// Search horizon after each stage, in pulse periods.
    pub horizon_periods: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            horizon_periods: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelSource,
    pub target: ModulusTarget,
    pub epsilon: f64,
    pub delta: f64,
    /// Simulated dimension; defaults to the model size, or the truncation rank for generated models.
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub averaging: AveragingConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Control CSV is written only below this many expanded steps.
    #[serde(default = "default_csv_limit")]
    pub csv_step_limit: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_csv_limit() -> usize {
    2_000_000
}

impl PipelineConfig {
    pub fn new(model: ModelSource, target: ModulusTarget, epsilon: f64, delta: f64) -> Self {
        Self {
            model,
            target,
            epsilon,
            delta,
            dimension: None,
            grid: GridConfig::default(),
            fit: FitConfig::default(),
            synthesis: SynthesisConfig::default(),
            averaging: AveragingConfig::default(),
            budget: BudgetConfig::default(),
            phase: PhaseConfig::default(),
            output: None,
            csv_step_limit: default_csv_limit(),
            seed: 0,
        }
    }

    /// Planar rotor with the tilt-orientation target.
    pub fn orientation_preset(dimension: usize, epsilon: f64, delta: f64) -> Self {
        Self::new(
            rotor_source(dimension),
            crate::rotor::orientation_target(),
            epsilon,
            delta,
        )
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.grid.points == 0 {
            return bad("grid needs at least one point");
        }
        if self.fit.degree_cap.is_multiple_of(2) {
            return bad("degree cap must be odd");
        }
        if self.fit.samples < 2 {
            return bad("fit needs at least two samples");
        }
        if !(self.synthesis.horizon > 0.0) || self.synthesis.slices == 0 {
            return bad("synthesis horizon and slices must be positive");
        }
        if self.averaging.samples_per_period == 0 || self.averaging.n == Some(0) {
            return bad("averaging n and samples per period must be positive");
        }
        if !(self.phase.epsilon > 0.0) {
            return bad("phase epsilon must be positive");
        }
        if let Some(d) = self.dimension {
            if d < 2 {
                return bad("dimension must be at least 2");
            }
        }
        Ok(())
    }
}

pub fn rotor_source(dimension: usize) -> ModelSource {
    ModelSource::Inline(ModelDocument {
        generator: Some(crate::spectral::Generator::PlanarRotor),
        dimension: Some(dimension),
        ..Default::default()
    })
}

pub fn load_model(source: &ModelSource, base_dir: &Path) -> Result<SpectralModel, PipelineError> {
    match source {
        ModelSource::Inline(doc) => Ok(doc.clone().into_model()?),
        ModelSource::File { file } => {
            let path = if file.is_absolute() {
                file.clone()
            } else {
                base_dir.join(file)
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
            Ok(crate::spectral::model_from_json(&text)?)
        }
    }
}

/// One averaging stage realizing `e^{r M^θ}` on the driven pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub letter: Letter,
    pub theta: f64,
    pub rotation: f64,
    pub n: usize,
    pub duration: f64,
    pub pause: f64,
    pub effective_time: f64,
    pub bound: f64,
    pub phase_defect: f64,
    #[serde(skip)]
    pub constants: Option<AveragingConstants>,
    #[serde(skip)]
    pub control: PiecewiseControl,
}

/// One candidate degree: angle fit error, moduli floor of the fit, moduli error of its train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub degree: usize,
    pub fit_error: f64,
    pub fit_floor: f64,
    pub aux_error: f64,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub model: SpectralModel,
    pub system: TruncatedSystem,
    pub validation: ValidationReport,
    pub truncation_rank: usize,
    pub tail_threshold: f64,
    pub fit: FitResult,
    pub fit_degree: usize,
    pub degree_scan: Vec<DegreeRow>,
    pub terms: Vec<BracketTerm>,
    pub train: PulseTrain,
    pub x: AuxGenerator,
    pub y: AuxGenerator,
    pub stages: Vec<StagePlan>,
    pub control: PiecewiseControl,
    pub status: ExitStatus,
    pub notes: Vec<String>,
}

fn worse(a: ExitStatus, b: ExitStatus) -> ExitStatus {
    if a == ExitStatus::Success {
        b
    } else {
        a
    }
}

/// Everything up to the control schedule; no ensemble simulation.
pub fn plan(config: &PipelineConfig, base_dir: &Path) -> Result<Plan, PipelineError> {
    config.check()?;
    let model = load_model(&config.model, base_dir)?;
    let validation = validate_assumptions(&model)?;
    if !validation.passed {
        return Err(PipelineError::Validation(validation));
    }
    let mut status = ExitStatus::Success;
    let mut notes = Vec::new();

    // Odd fit of ρ = arccos m, raising the degree until the tolerance holds.
    let samples: Vec<(f64, f64)> = uniform_grid(config.fit.samples)
        .into_iter()
        .map(|a| (a, config.target.angle(a)))
        .collect();
    let x = AuxGenerator::x(model.b12())?;
    let y = AuxGenerator::y(model.b12())?;
    let grid = uniform_grid(config.grid.points);
    let targets: Vec<[f64; 4]> = grid.iter().map(|&a| config.target.moduli_table(a)).collect();
    let mut scan = Vec::new();
    let mut best: Option<(usize, FitResult, PulseTrain, Vec<BracketTerm>)> = None;
    let mut best_score = f64::INFINITY;
    for degree in (1..=config.fit.degree_cap).step_by(2) {
        let fit = fit_odd_angle_curve(&samples, degree, config.fit.tolerance)?;
        let program = program_from_curve(&fit.curve, &x, &y, config.synthesis.horizon)?;
        let train = synthesize_pulse_train(&program, config.synthesis.slices)?;
        let (mut floor, mut aux) = (0.0f64, 0.0f64);
        for (i, &a) in grid.iter().enumerate() {
            let rho = fit.curve.eval(a);
            let (c, s) = (rho.cos().abs(), rho.sin().abs());
            floor = floor.max(table_error(&[c, s, s, c], &targets[i]));
            let u = evaluate_pulse_train(&train, &x, &y, a)?;
            aux = aux.max(table_error(&driven_moduli(u.as_matrix()), &targets[i]));
        }
        scan.push(DegreeRow {
            degree,
            fit_error: fit.sup_error,
            fit_floor: floor,
            aux_error: aux,
        });
        let score = match config.fit.select {
            DegreeRule::FitError => fit.sup_error,
            DegreeRule::AuxError => aux,
        };
        let done = fit.within_tolerance;
        if score < best_score {
            best_score = score;
            best = Some((degree, fit, train, program.terms().to_vec()));
        }
        if done {
            break;
        }
    }
    let (fit_degree, fit, train, terms) = best.expect("degree cap is at least 1");
    if !scan.iter().any(|r| r.fit_error <= config.fit.tolerance) {
        status = worse(status, ExitStatus::FitUnreachable);
        notes.push(format!(
            "fit sup error {:.3e} above tolerance {:.3e} at degree cap {}",
            scan.iter().map(|r| r.fit_error).fold(f64::INFINITY, f64::min),
            config.fit.tolerance,
            config.fit.degree_cap
        ));
    }

    let r = train.total_duration();
    let tail_threshold = if r > 0.0 {
        default_tail_threshold(config.epsilon, r)
    } else {
        f64::INFINITY
    };
    let truncation_rank = truncation_rank_with_threshold(&model, tail_threshold)?;
    let n_sim = config.dimension.unwrap_or(match model.extent() {
        Extent::Finite => model.dimension(),
        Extent::Generated(_) => truncation_rank,
    });
    if n_sim < truncation_rank {
        notes.push(format!("simulated dimension {n_sim} is below the truncation rank {truncation_rank}"));
    }
    let system = truncate(&model, n_sim)?;

    // Each train segment becomes one or more stages of angle ≤ π/2.
    let b = model.b12().norm();
    let max_rotation = FRAC_PI_2 / b;
    let mut pieces = Vec::new();
    for seg in &train.segments {
        let r = seg.duration.abs();
        let k = ((r / max_rotation) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let theta = seg.letter.phase() + if seg.duration < 0.0 { std::f64::consts::PI } else { 0.0 };
        for _ in 0..k {
            pieces.push((seg.letter, theta, r / k as f64));
        }
    }
    let stage_epsilon = config.epsilon / pieces.len().max(1) as f64;
    let options = TrackingOptions {
        n: config.averaging.n,
        n_max: config.averaging.n_max,
        delta: config.delta,
        samples_per_period: config.averaging.samples_per_period,
        shape: config.averaging.shape,
    };
    let min_n = (1.0 / config.delta).ceil().max(1.0) as usize;
    if let Some(n) = config.averaging.n {
        if n < min_n {
            notes.push(format!("fixed n = {n} violates |u| <= delta; using {min_n}"));
        }
    }

    let mut cache: HashMap<(u64, u64), StagePlan> = HashMap::new();
    let mut stages = Vec::with_capacity(pieces.len());
    let mut control = PiecewiseControl::new();
    let (mut steps, mut duration) = (0u64, 0.0f64);
    for (letter, theta, r) in pieces {
        if stages.len() >= config.budget.max_stages {
            status = worse(status, ExitStatus::BudgetExhausted);
            notes.push(format!("stage budget {} reached", config.budget.max_stages));
            break;
        }
        let key = (theta.to_bits(), r.to_bits());
        let stage = match cache.get(&key) {
            Some(s) => s.clone(),
            None => {
                let mut opts = options.clone();
                if let Some(n) = opts.n {
                    opts.n = Some(n.max(min_n));
                }
                let tracking = match track_rotation(&system, &[], theta, r, stage_epsilon, &opts) {
                    Err(AveragingError::Budget { n_max, .. }) => {
                        status = worse(status, ExitStatus::BudgetExhausted);
                        notes.push(format!("stage bound needs n above n_max = {n_max}; using n_max"));
                        opts.n = Some(n_max.max(min_n));
                        track_rotation(&system, &[], theta, r, stage_epsilon, &opts)?
                    }
                    Err(AveragingError::ValidityWindow { .. }) => {
                        status = worse(status, ExitStatus::ValidityWindow);
                        notes.push(format!("rotation {r} outside the averaging window; stage skipped"));
                        continue;
                    }
                    other => other?,
                };
                let t = tracking.duration;
                let period = tracking.pulse.period;
                let horizon = t + config.phase.horizon_periods as f64 * period;
                let (pause, phase_defect) = match find_phase_alignment_after(
                    system.lambdas(),
                    period,
                    config.phase.epsilon,
                    t,
                    horizon,
                ) {
                    Ok(a) => (a.s - t, a.max_defect()),
                    Err(_) => {
                        status = worse(status, ExitStatus::PhaseAlignment);
                        notes.push(format!("no phase alignment within {} periods", config.phase.horizon_periods));
                        (0.0, f64::NAN)
                    }
                };
                let mut c = tracking.control;
                c.push_pause(pause)?;
                let s = StagePlan {
                    letter,
                    theta,
                    rotation: r,
                    n: tracking.n,
                    duration: t,
                    pause,
                    effective_time: tracking.effective_time,
                    bound: tracking.bound,
                    phase_defect,
                    constants: Some(tracking.constants),
                    control: c,
                };
                cache.insert(key, s.clone());
                s
            }
        };
        let stage_steps = stage.control.step_count() as u64;
        let stage_duration = stage.duration + stage.pause;
        if steps + stage_steps > config.budget.max_steps || duration + stage_duration > config.budget.max_duration {
            status = worse(status, ExitStatus::BudgetExhausted);
            notes.push(format!("step or duration budget reached after {} stages", stages.len()));
            break;
        }
        steps += stage_steps;
        duration += stage_duration;
        control.append(&stage.control);
        stages.push(stage);
    }
    control.check_bound(config.delta)?;
    Ok(Plan {
        model,
        system,
        validation,
        truncation_rank,
        tail_threshold,
        fit,
        fit_degree,
        terms,
        degree_scan: scan,
        train,
        x,
        y,
        stages,
        control,
        status,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub index: usize,
    #[serde(flatten)]
    pub stage: StagePlan,
    /// Sup over the grid of `‖X_stage − e^{(t+p)A} e^{v α M†}‖`.
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSummary {
    pub i: f64,
    pub efficiency: f64,
    pub t_star: f64,
    pub k: f64,
    pub c: f64,
    pub omega: f64,
    pub period: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: ExitStatus,
    pub exit_code: i32,
    pub notes: Vec<String>,
    pub dimension: usize,
    pub truncation_rank: usize,
    pub tail_threshold: f64,
    pub tail_norm: f64,
    pub norm_b: f64,
    pub b12_abs: f64,
    pub fit_degree: usize,
    pub degree_scan: Vec<DegreeRow>,
    pub fit_coefficients: Vec<f64>,
    pub fit_angle_error: f64,
    pub fit_tolerance: f64,
    /// Moduli error of the exact fitted rotation.
    pub fit_floor: f64,
    pub bracket_terms: Vec<BracketTerm>,
    pub train_segments: usize,
    pub train_duration: f64,
    /// Moduli error of the two-level pulse train.
    pub aux_error: f64,
    pub stages: usize,
    pub stage_epsilon: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub constants: Option<ConstantsSummary>,
    pub max_stage_bound: f64,
    pub max_stage_measured: f64,
    /// Stages whose measured error exceeds their bound.
    pub stages_over_bound: usize,
    pub control_steps: usize,
    pub control_duration: f64,
    pub control_max_abs: f64,
    pub control_abs_integral: f64,
    pub delta: f64,
    pub grid_points: usize,
    pub sup_error: f64,
    /// Sup distance of the simulated propagators to the stage predictions.
    pub prediction_distance: f64,
    pub prediction_moduli_distance: f64,
    /// `(L_target + ‖B‖ ∫|u|) h / 2` for the `m11` entry between grid points.
    pub lipschitz_slack: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub plan: Plan,
    pub report: EnsembleReport,
    pub stage_rows: Vec<StageRow>,
    pub summary: Summary,
}

impl PipelineOutcome {
    pub fn status(&self) -> ExitStatus {
        self.summary.status
    }
}

struct AlphaResult {
    final_u: ComplexMatrix,
    predicted: ComplexMatrix,
    stage_errors: Vec<f64>,
}

fn simulate_alpha(plan: &Plan, alpha: f64) -> Result<AlphaResult, PipelineError> {
    let n = plan.system.dimension();
    let mut prop = Propagator::new(&plan.system, alpha)?;
    let mut u = ComplexMatrix::identity(n);
    let mut predicted = ComplexMatrix::identity(n);
    let mut stage_errors = Vec::with_capacity(plan.stages.len());
    let mut pred_cache: HashMap<(u64, u64), (ComplexMatrix, ComplexMatrix)> = HashMap::new();
    for stage in &plan.stages {
        let key = (stage.theta.to_bits(), stage.rotation.to_bits());
        if !pred_cache.contains_key(&key) {
            let p = prop.apply(&stage.control)?;
            let constants = stage.constants.as_ref().expect("planned stage has constants");
            let pred = averaged_propagator(
                &plan.system,
                &constants.m_dagger,
                stage.duration + stage.pause,
                stage.effective_time,
                alpha,
            )?
            .into_matrix();
            pred_cache.insert(key, (p, pred));
        }
        let (p, pred) = &pred_cache[&key];
        stage_errors.push(operator_norm(&p.try_sub(pred)?));
        u = p.try_mul(&u)?;
        predicted = pred.try_mul(&predicted)?;
    }
    Ok(AlphaResult {
        final_u: u,
        predicted,
        stage_errors,
    })
}

/// Ensemble simulation of a plan over the grid, in grid order.
fn simulate_plan(plan: &Plan, grid: &[f64]) -> Result<Vec<AlphaResult>, PipelineError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.par_iter().map(|&a| simulate_alpha(plan, a)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.iter().map(|&a| simulate_alpha(plan, a)).collect()
    }
}

fn table_error(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the whole chain and assembles the report and summary.
pub fn run_pipeline(config: &PipelineConfig, base_dir: &Path) -> Result<PipelineOutcome, PipelineError> {
    let plan = plan(config, base_dir)?;
    let grid = uniform_grid(config.grid.points);
    let results = simulate_plan(&plan, &grid)?;

    let moduli: Vec<[f64; 4]> = results.iter().map(|r| driven_moduli(&r.final_u)).collect();
    let targets: Vec<[f64; 4]> = grid.iter().map(|&a| config.target.moduli_table(a)).collect();
    let report = EnsembleReport::new(&grid, moduli, targets.clone());

    let mut prediction_distance = 0.0f64;
    let mut prediction_moduli_distance = 0.0f64;
    for r in &results {
        prediction_distance = prediction_distance.max(operator_norm(&r.final_u.try_sub(&r.predicted)?));
        prediction_moduli_distance =
            prediction_moduli_distance.max(table_error(&driven_moduli(&r.final_u), &driven_moduli(&r.predicted)));
    }

    let mut fit_floor = 0.0f64;
    let mut aux_error = 0.0f64;
    for (i, &a) in grid.iter().enumerate() {
        let rho = plan.fit.curve.eval(a);
        let (c, s) = (rho.cos().abs(), rho.sin().abs());
        fit_floor = fit_floor.max(table_error(&[c, s, s, c], &targets[i]));
        let aux = evaluate_pulse_train(&plan.train, &plan.x, &plan.y, a)?;
        aux_error = aux_error.max(table_error(&driven_moduli(aux.as_matrix()), &targets[i]));
    }

    let stage_rows: Vec<StageRow> = plan
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageRow {
            index: i,
            stage: s.clone(),
            measured: results.iter().map(|r| r.stage_errors[i]).fold(0.0, f64::max),
        })
        .collect();

    let norm_b = operator_norm(plan.system.b());
    let h = if grid.len() > 1 { 1.0 / (grid.len() - 1) as f64 } else { 0.0 };
    let abs_integral = plan.control.abs_integral();
    let constants = plan.stages.first().and_then(|s| s.constants.as_ref()).map(|c| ConstantsSummary {
        i: c.i,
        efficiency: c.efficiency,
        t_star: c.t_star,
        k: c.k,
        c: c.c,
        omega: c.omega,
        period: c.period,
    });
    let summary = Summary {
        status: plan.status,
        exit_code: plan.status.code(),
        notes: plan.notes.clone(),
        dimension: plan.system.dimension(),
        truncation_rank: plan.truncation_rank,
        tail_threshold: plan.tail_threshold,
        tail_norm: tail_norm(&plan.model, plan.system.dimension())?,
        norm_b,
        b12_abs: plan.model.b12().norm(),
        fit_degree: plan.fit_degree,
        degree_scan: plan.degree_scan.clone(),
        fit_coefficients: plan.fit.curve.coefficients.clone(),
        fit_angle_error: plan.fit.sup_error,
        fit_tolerance: config.fit.tolerance,
        fit_floor,
        bracket_terms: plan.terms.clone(),
        train_segments: plan.train.len(),
        train_duration: plan.train.total_duration(),
        aux_error,
        stages: plan.stages.len(),
        stage_epsilon: config.epsilon / plan.stages.len().max(1) as f64,
        n_min: plan.stages.iter().map(|s| s.n).min().unwrap_or(0),
        n_max: plan.stages.iter().map(|s| s.n).max().unwrap_or(0),
        constants,
        max_stage_bound: plan.stages.iter().map(|s| s.bound).fold(0.0, f64::max),
        max_stage_measured: stage_rows.iter().map(|r| r.measured).fold(0.0, f64::max),
        stages_over_bound: stage_rows.iter().filter(|r| r.measured > r.stage.bound).count(),
        control_steps: plan.control.step_count(),
        control_duration: plan.control.total_duration(),
        control_max_abs: plan.control.max_abs_value(),
        control_abs_integral: abs_integral,
        delta: config.delta,
        grid_points: grid.len(),
        sup_error: report.sup_error,
        prediction_distance,
        prediction_moduli_distance,
        lipschitz_slack: (config.target.lipschitz() + norm_b * abs_integral) * h / 2.0,
        seed: config.seed,
    };
    Ok(PipelineOutcome {
        plan,
        report,
        stage_rows,
        summary,
    })
}

pub fn stages_csv(rows: &[StageRow]) -> String {
    let mut out = String::from("index,letter,theta,rotation,n,duration,pause,effective_time,bound,measured\n");
    for r in rows {
        let s = &r.stage;
        writeln!(
            out,
            "{},{:?},{:.15e},{:.15e},{},{:.15e},{:.15e},{:.15e},{:.6e},{:.6e}",
            r.index, s.letter, s.theta, s.rotation, s.n, s.duration, s.pause, s.effective_time, s.bound, r.measured
        )
        .unwrap();
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Writes `train.json`, `control.json` and, below the size limit, `control.csv`.
pub fn write_plan(plan: &Plan, config: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    write(dir, "train.json", &plan.train.to_json())?;
    write(dir, "control.json", &plan.control.to_json())?;
    if plan.control.step_count() <= config.csv_step_limit {
        write(dir, "control.csv", &plan.control.to_csv())?;
    }
    Ok(())
}

/// All pipeline artifacts: plan files plus `report.csv`, `stages.csv` and `summary.json`.
pub fn write_artifacts(outcome: &PipelineOutcome, config: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
    write_plan(&outcome.plan, config, dir)?;
    write(dir, "report.csv", &outcome.report.to_csv())?;
    write(dir, "stages.csv", &stages_csv(&outcome.stage_rows))?;
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write(dir, "summary.json", &summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: usize,
    pub fit_degree: usize,
    pub sup_error: f64,
    pub fit_floor: f64,
    pub aux_error: f64,
    pub control_steps: usize,
    pub control_duration: f64,
}

/// Runs the pipeline once per synthesis slice count `n`.
pub fn run_trend(config: &PipelineConfig, base_dir: &Path, levels: &[usize]) -> Result<Vec<TrendRow>, PipelineError> {
    levels
        .iter()
        .map(|&n| {
            let mut c = config.clone();
            c.synthesis.slices = n;
            let o = run_pipeline(&c, base_dir)?;
            Ok(TrendRow {
                n,
                fit_degree: o.summary.fit_degree,
                sup_error: o.summary.sup_error,
                fit_floor: o.summary.fit_floor,
                aux_error: o.summary.aux_error,
                control_steps: o.summary.control_steps,
                control_duration: o.summary.control_duration,
            })
        })
        .collect()
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let mut out = String::from("n,fit_degree,sup_error,fit_floor,aux_error,control_steps,control_duration\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.12e},{:.12e},{:.12e},{},{:.12e}",
            r.n, r.fit_degree, r.sup_error, r.fit_floor, r.aux_error, r.control_steps, r.control_duration
        )
        .unwrap();
    }
    out
}
