//! Bracket programs and their realization as pulse trains.

use serde::{Deserialize, Serialize};

use super::{bracket_of_word, fit::OddAngleCurve, AuxGenerator, Letter, Su2Error};
use crate::linalg::{matrix_exp, ComplexMatrix, UnitaryMatrix, C64};

/// One piecewise-constant stretch `e^{d α M^letter}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub letter: Letter,
    pub duration: f64,
}

/// Segments in time order: the first entry acts first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub segments: Vec<Segment>,
}

impl PulseTrain {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `Σ |d_k|`.
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration.abs()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|seg| Segment {
                    letter: seg.letter,
                    duration: seg.duration * s,
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.segments.iter().all(|s| s.duration.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pulse train serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketTerm {
    pub beta: f64,
    /// Right-nested bracket word; `[X, Y]` is `[X, Y]` as a word.
    pub word: Vec<Letter>,
}

impl BracketTerm {
    pub fn new(beta: f64, word: Vec<Letter>) -> Result<Self, Su2Error> {
        if word.is_empty() {
            return Err(Su2Error::EmptyWord);
        }
        if !beta.is_finite() {
            return Err(Su2Error::NonFinite);
        }
        Ok(Self { beta, word })
    }

    /// Number of bracketing operations.
    pub fn length(&self) -> usize {
        self.word.len() - 1
    }
}

/// `e^{T Σ β_j α^{l_j+1} C_j(X, Y)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketProgram {
    x: AuxGenerator,
    y: AuxGenerator,
    terms: Vec<BracketTerm>,
    horizon: f64,
}

impl BracketProgram {
    pub fn new(
        x: AuxGenerator,
        y: AuxGenerator,
        terms: Vec<BracketTerm>,
        horizon: f64,
    ) -> Result<Self, Su2Error> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Su2Error::NonFinite);
        }
        if x.b12() != y.b12() {
            return Err(Su2Error::MismatchedGenerators);
        }
        Ok(Self {
            x,
            y,
            terms,
            horizon,
        })
    }

    pub fn x(&self) -> &AuxGenerator {
        &self.x
    }

    pub fn y(&self) -> &AuxGenerator {
        &self.y
    }

    pub fn terms(&self) -> &[BracketTerm] {
        &self.terms
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `Σ β_j α^{l_j+1} C_j(X, Y)`.
    pub fn generator(&self, alpha: f64) -> Result<ComplexMatrix, Su2Error> {
        let mut acc = ComplexMatrix::zeros(2, 2);
        for term in &self.terms {
            let c = bracket_of_word(&term.word, self.x.matrix(), self.y.matrix())?;
            let w = term.beta * alpha.powi(term.word.len() as i32);
            acc = acc.try_add(&c.scale_re(w))?;
        }
        Ok(acc)
    }

    /// `e^{T · generator(α)}`.
    pub fn target(&self, alpha: f64) -> Result<ComplexMatrix, Su2Error> {
        Ok(matrix_exp(&self.generator(alpha)?.scale_re(self.horizon))?)
    }
}

/// One term per coefficient, `ad_X^{2l} Y` weighted to rotate by `c_l α^{2l+1}`.
pub fn program_from_curve(
    curve: &OddAngleCurve,
    x: &AuxGenerator,
    y: &AuxGenerator,
    horizon: f64,
) -> Result<BracketProgram, Su2Error> {
    let b12 = x.b12();
    if b12.norm() == 0.0 {
        return Err(Su2Error::ZeroCoupling);
    }
    let canonical_x = AuxGenerator::x(b12)?;
    let canonical_y = AuxGenerator::y(b12)?;
    if y.b12() != b12 || x.matrix() != canonical_x.matrix() || y.matrix() != canonical_y.matrix() {
        return Err(Su2Error::MismatchedGenerators);
    }
    if curve.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Su2Error::NonFinite);
    }
    let y01 = y.matrix()[(0, 1)];
    let mut terms = Vec::new();
    for (l, &c) in curve.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let word = super::even_bracket_word(l);
        let bracket = bracket_of_word(&word, x.matrix(), y.matrix())?;
        // Every even bracket is a real multiple of Y.
        let factor: C64 = bracket[(0, 1)] / y01;
        let beta = c / (horizon * b12.norm() * factor.re);
        terms.push(BracketTerm::new(beta, word)?);
    }
    BracketProgram::new(x.clone(), y.clone(), terms, horizon)
}

fn inverse(block: &[Segment]) -> impl Iterator<Item = Segment> + '_ {
    block.iter().rev().map(|s| Segment {
        letter: s.letter,
        duration: -s.duration,
    })
}

/// Group-commutator realization of `e^{±s^{k} C_word}` in matrix order.
fn commutator_block(word: &[Letter], s: f64, positive: bool) -> Vec<Segment> {
    match word {
        [] => Vec::new(),
        [a] => vec![Segment {
            letter: *a,
            duration: if positive { s } else { -s },
        }],
        [first, rest @ ..] => {
            let a = commutator_block(std::slice::from_ref(first), s, true);
            let b = commutator_block(rest, s, true);
            let (p, q) = if positive { (a, b) } else { (b, a) };
            let mut out = Vec::with_capacity(2 * (p.len() + q.len()));
            out.extend_from_slice(&p);
            out.extend_from_slice(&q);
            out.extend(inverse(&p));
            out.extend(inverse(&q));
            out
        }
    }
}

fn push_merged(stack: &mut Vec<Segment>, seg: Segment) {
    if seg.duration == 0.0 {
        return;
    }
    if let Some(top) = stack.last_mut() {
        if top.letter == seg.letter {
            top.duration += seg.duration;
            if top.duration == 0.0 {
                stack.pop();
            }
            return;
        }
    }
    stack.push(seg);
}

/// First-order splitting with `n` slices; each bracket term is realized by
/// nested group commutators with letter time `(|β| T / n)^{1/(l+1)}`.
pub fn synthesize_pulse_train(program: &BracketProgram, n: usize) -> Result<PulseTrain, Su2Error> {
    if n == 0 {
        return Err(Su2Error::ZeroSlices);
    }
    let t = program.horizon / n as f64;
    let mut slice = Vec::new();
    for term in &program.terms {
        if term.beta == 0.0 {
            continue;
        }
        if term.word.len() == 1 {
            slice.push(Segment {
                letter: term.word[0],
                duration: term.beta * t,
            });
            continue;
        }
        let s = (term.beta.abs() * t).powf(1.0 / term.word.len() as f64);
        slice.extend(commutator_block(&term.word, s, term.beta > 0.0));
    }
    let mut segments = Vec::with_capacity(slice.len() * n);
    for _ in 0..n {
        // Matrix order within the slice is reversed into time order.
        for seg in slice.iter().rev() {
            push_merged(&mut segments, *seg);
        }
    }
    Ok(PulseTrain { segments })
}

type M2 = [C64; 4];

fn mul2(a: &M2, b: &M2) -> M2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// `U_m ⋯ U_1` with `U_k = e^{d_k α M^{letter_k}}`.
pub fn evaluate_pulse_train(
    train: &PulseTrain,
    x: &AuxGenerator,
    y: &AuxGenerator,
    alpha: f64,
) -> Result<UnitaryMatrix, Su2Error> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut u: M2 = [one, zero, zero, one];
    for seg in &train.segments {
        let g = match seg.letter {
            Letter::X => x,
            Letter::Y => y,
        };
        let e = g.exp(seg.duration * alpha);
        let e: M2 = [e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]];
        u = mul2(&e, &u);
    }
    let m = ComplexMatrix::from_vec(2, 2, u.to_vec())?;
    Ok(UnitaryMatrix::new(m)?)
}
