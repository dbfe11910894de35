//! The two-level auxiliary system and its bracket calculus.
//!
//! After the diagonal rotating-frame change of variables the driven pair
//! evolves under `α M^ν` with
//!
//! ```text
//! M^ν = [[0, b12 e^{iν}], [−conj(b12 e^{iν}), 0]]
//! ```
//!
//! The two canonical generators are `X = M^{π/2}` and `Y = M^0`. Iterated
//! brackets `ad_X^{2k} Y` are computed by direct nested commutators; they
//! are all proportional to `Y`, with factor `(−4|b12|²)^k`.

mod fit;
mod program;

pub use fit::{fit_odd_angle_curve, FitResult, OddAngleCurve};
pub use program::{
    evaluate_pulse_train, program_from_curve, synthesize_pulse_train, BracketProgram,
    BracketTerm, PulseTrain, Segment,
};

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{commutator, matrix_exp, ComplexMatrix, LinalgError, SkewHermitianMatrix, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Su2Error {
    #[error("driven coupling b12 vanishes")]
    ZeroCoupling,
    #[error("degree must be odd and positive, got {0}")]
    InvalidDegree(usize),
    #[error("only {distinct} distinct nonzero sample points for {needed} coefficients")]
    DegenerateSamples { distinct: usize, needed: usize },
    #[error("sample α = {0} lies outside [0, 1]")]
    SampleOutOfRange(f64),
    #[error("slice count must be at least 1")]
    ZeroSlices,
    #[error("bracket word is empty")]
    EmptyWord,
    #[error("non-finite value")]
    NonFinite,
    #[error("generators must be M^(π/2) and M^0 built from the same b12")]
    MismatchedGenerators,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A generator letter of the auxiliary system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    /// `M^{π/2}`
    X,
    /// `M^0`
    Y,
}

impl Letter {
    pub fn phase(self) -> f64 {
        match self {
            Letter::X => FRAC_PI_2,
            Letter::Y => 0.0,
        }
    }
}

/// `M^ν` at `α = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxGenerator {
    b12: C64,
    nu: f64,
    matrix: SkewHermitianMatrix,
}

impl AuxGenerator {
    pub fn new(b12: C64, nu: f64) -> Result<Self, Su2Error> {
        if !b12.re.is_finite() || !b12.im.is_finite() || !nu.is_finite() {
            return Err(Su2Error::NonFinite);
        }
        if b12.norm() == 0.0 {
            return Err(Su2Error::ZeroCoupling);
        }
        let z = b12 * C64::from_polar(1.0, nu);
        let zero = C64::new(0.0, 0.0);
        let m = ComplexMatrix::from_rows(&[vec![zero, z], vec![-z.conj(), zero]])?;
        Ok(Self {
            b12,
            nu,
            matrix: SkewHermitianMatrix::new(m)?,
        })
    }

    pub fn x(b12: C64) -> Result<Self, Su2Error> {
        Self::new(b12, FRAC_PI_2)
    }

    pub fn y(b12: C64) -> Result<Self, Su2Error> {
        Self::new(b12, 0.0)
    }

    pub fn for_letter(letter: Letter, b12: C64) -> Result<Self, Su2Error> {
        Self::new(b12, letter.phase())
    }

    pub fn b12(&self) -> C64 {
        self.b12
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.matrix.as_matrix()
    }

    /// `e^{s M^ν}` in closed form: `M² = −|b12|² I`.
    pub fn exp(&self, s: f64) -> ComplexMatrix {
        let w = self.b12.norm();
        let (sin, cos) = (s * w).sin_cos();
        let z = self.matrix()[(0, 1)];
        let k = sin / w;
        let c = C64::new(cos, 0.0);
        ComplexMatrix::from_rows(&[vec![c, z * k], vec![-z.conj() * k, c]])
            .expect("2x2 rotation is well-formed")
    }
}

/// Diagonal change of variables `exp(−tα diag(b11, b22)) · x`.
///
/// `b11`, `b22` are diagonal entries of a skew-Hermitian matrix (purely
/// imaginary), so the result has the same entrywise moduli as `x`.
pub fn rotating_frame(
    x: &ComplexMatrix,
    t: f64,
    b11: C64,
    b22: C64,
    alpha: f64,
) -> Result<ComplexMatrix, LinalgError> {
    if x.rows() != 2 {
        return Err(LinalgError::DimensionMismatch {
            left: (2, 2),
            right: x.dim(),
        });
    }
    let d = ComplexMatrix::from_diag(&[(-t * alpha * b11).exp(), (-t * alpha * b22).exp()]);
    d.try_mul(x)
}

/// Right-nested bracket `[w₁, [w₂, [… , w_k]]]` of the letters in `word`.
pub fn bracket_of_word(
    word: &[Letter],
    x: &ComplexMatrix,
    y: &ComplexMatrix,
) -> Result<ComplexMatrix, Su2Error> {
    let (last, rest) = word.split_last().ok_or(Su2Error::EmptyWord)?;
    let pick = |l: &Letter| match l {
        Letter::X => x,
        Letter::Y => y,
    };
    let mut acc = pick(last).clone();
    for l in rest.iter().rev() {
        acc = commutator(pick(l), &acc)?;
    }
    Ok(acc)
}

/// `ad_{M^{π/2}}^{2k} M^0`, evaluated by `2k` nested commutators.
pub fn bracket_generator(b12: C64, order: usize) -> Result<ComplexMatrix, Su2Error> {
    let x = AuxGenerator::x(b12)?;
    let y = AuxGenerator::y(b12)?;
    bracket_of_word(&even_bracket_word(order), x.matrix(), y.matrix())
}

/// The word `X^{2k} Y`.
pub fn even_bracket_word(order: usize) -> Vec<Letter> {
    let mut w = vec![Letter::X; 2 * order];
    w.push(Letter::Y);
    w
}

/// Defects of the group-commutator product against the bracket exponential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutatorDefect {
    /// `‖G(t)^n − e^{n α² t² [X,Y]}‖`
    pub power: f64,
    /// `‖G(t) − e^{α² t² [X,Y]}‖`
    pub single_step: f64,
}

/// `G(t) = e^{tαX} e^{tαY} e^{−tαX} e^{−tαY}` compared with its bracket limit.
pub fn commutator_defect(
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    t: f64,
    n: u64,
    alpha: f64,
) -> Result<CommutatorDefect, Su2Error> {
    let ta = t * alpha;
    let ex = matrix_exp(&x.scale_re(ta))?;
    let ey = matrix_exp(&y.scale_re(ta))?;
    let exi = matrix_exp(&x.scale_re(-ta))?;
    let eyi = matrix_exp(&y.scale_re(-ta))?;
    let g = &(&(&ex * &ey) * &exi) * &eyi;
    let br = commutator(x, y)?;
    let step_ref = matrix_exp(&br.scale_re(ta * ta))?;
    let power_ref = matrix_exp(&br.scale_re(n as f64 * ta * ta))?;
    let gn = g.powi(n)?;
    Ok(CommutatorDefect {
        power: crate::linalg::operator_norm(&(&gn - &power_ref)),
        single_step: crate::linalg::operator_norm(&(&g - &step_ref)),
    })
}
