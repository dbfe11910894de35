//! Dense complex matrix kernels.
//!
//! Everything downstream works with small (at most a few dozen rows) dense
//! complex matrices: propagators, generators, compressions. The kernels here
//! are written for that regime and favour accuracy and determinism over
//! asymptotic speed.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Tolerance used for structural checks (skew-Hermitian, diagonal, ...).
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance used for unitarity checks on propagators.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not skew-Hermitian (defect {0:e})")]
    NotSkewHermitian(f64),
    #[error("matrix is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("singular matrix in linear solve")]
    Singular,
    #[error("invalid shape {rows}x{cols} with {len} entries")]
    BadShape { rows: usize, cols: usize, len: usize },
}

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data: Vec<C64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self::from_vec(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Entrywise moduli, row-major.
    pub fn moduli(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Copy of the block `rows × cols` starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, a) in row.iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self, LinalgError> {
        if self.dim() != rhs.dim() {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// `‖M + M*‖`, zero exactly for skew-Hermitian matrices.
    pub fn skew_hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        operator_norm(&(self + &self.adjoint()))
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, mut n: u64) -> Result<Self, LinalgError> {
        require_square(self)?;
        let mut result = Self::identity(self.rows);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = &result * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        Ok(result)
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        require_square(self)?;
        if rhs.rows != self.rows {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(LinalgError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                }
                for j in 0..m {
                    b.data.swap(piv * m + j, col * m + j);
                }
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / d;
                if f.re == 0.0 && f.im == 0.0 {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                for j in 0..m {
                    let v = b[(col, j)];
                    b[(r, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[(col, col)];
            for j in 0..m {
                let mut acc = b[(col, j)];
                for k in col + 1..n {
                    acc -= a[(col, k)] * b[(k, j)];
                }
                b[(col, j)] = acc / d;
            }
        }
        Ok(b)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator impls panic on shape mismatch; use the `try_*` forms on untrusted input.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

fn require_square(m: &ComplexMatrix) -> Result<(), LinalgError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        })
    }
}

/// A matrix certified to satisfy `M + M* = 0` up to [`CONSTRUCTION_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct SkewHermitianMatrix(ComplexMatrix);

impl SkewHermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        require_square(&m)?;
        let defect = m.skew_hermitian_defect();
        if defect > CONSTRUCTION_TOL {
            return Err(LinalgError::NotSkewHermitian(defect));
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

impl TryFrom<ComplexMatrix> for SkewHermitianMatrix {
    type Error = LinalgError;
    fn try_from(m: ComplexMatrix) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<SkewHermitianMatrix> for ComplexMatrix {
    fn from(m: SkewHermitianMatrix) -> Self {
        m.0
    }
}

/// A matrix certified unitary up to [`UNITARITY_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        let defect = unitarity_defect(&m)?;
        if defect > UNITARITY_TOL {
            return Err(LinalgError::NotUnitary(defect));
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

impl TryFrom<ComplexMatrix> for UnitaryMatrix {
    type Error = LinalgError;
    fn try_from(m: ComplexMatrix) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<UnitaryMatrix> for ComplexMatrix {
    fn from(m: UnitaryMatrix) -> Self {
        m.0
    }
}

/// Coefficients of the [13/13] diagonal Padé approximant of `exp`.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Squaring threshold: the argument is halved until its 1-norm is below
/// this value, where the [13/13] approximant is accurate to unit roundoff.
pub const EXPM_THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a fixed [13/13] Padé
/// approximant.
pub fn matrix_exp(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    require_square(m)?;
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows;
    let norm = m.norm_one();
    if norm == 0.0 {
        return Ok(ComplexMatrix::identity(n));
    }
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == C64::new(0.0, 0.0)));
    if diagonal {
        let d: Vec<C64> = (0..n).map(|i| m[(i, i)].exp()).collect();
        return Ok(ComplexMatrix::from_diag(&d));
    }
    let squarings = if norm > EXPM_THETA13 {
        (norm / EXPM_THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.scale_re(0.5f64.powi(squarings));
    let b = &PADE13;
    let ident = ComplexMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> ComplexMatrix {
        let mut out = a6.scale_re(c6);
        out = &out + &a4.scale_re(c4);
        out = &out + &a2.scale_re(c2);
        &out + &ident.scale_re(c0)
    };
    let u_inner = &(&a6 * &lin(b[13], b[11], b[9], 0.0)) + &lin(b[7], b[5], b[3], b[1]);
    let u = &a * &u_inner;
    let v = &(&a6 * &lin(b[12], b[10], b[8], 0.0)) + &lin(b[6], b[4], b[2], b[0]);

    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Largest singular value.
///
/// Runs Lanczos with full reorthogonalisation on `M*M`; when the Krylov
/// space closes early the iteration restarts from a vector orthogonal to
/// everything seen so far, so after `cols` steps the tridiagonal projection
/// is similar to `M*M` and its top eigenvalue (found by Sturm bisection) is
/// exact up to rounding.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    if m.max_abs() == 0.0 {
        return 0.0;
    }
    // Scale to unit max entry to keep the Gram matrix well inside range.
    let s = m.max_abs();
    let ms = m.scale_re(1.0 / s);
    let gram = &ms.adjoint() * &ms;
    top_eigenvalue_hermitian(&gram).max(0.0).sqrt() * s
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn hermitian_apply(h: &ComplexMatrix, v: &[C64]) -> Vec<C64> {
    (0..h.rows)
        .map(|i| (0..h.cols).map(|j| h[(i, j)] * v[j]).sum())
        .collect()
}

fn orthogonalise(w: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn fresh_direction(n: usize, basis: &[Vec<C64>]) -> Option<Vec<C64>> {
    let mut best: Option<(f64, Vec<C64>)> = None;
    for k in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[k] = C64::new(1.0, 0.0);
        orthogonalise(&mut e, basis);
        let nrm = norm2(&e);
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, e));
        }
    }
    best.filter(|(nrm, _)| *nrm > 1e-8).map(|(nrm, mut e)| {
        e.iter_mut().for_each(|z| *z /= nrm);
        e
    })
}

fn top_eigenvalue_hermitian(h: &ComplexMatrix) -> f64 {
    let n = h.rows;
    let scale = h.norm_one().max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);

    // Deterministic start vector with no special alignment to the canonical basis.
    let mut v: Vec<C64> = (0..n)
        .map(|j| C64::new(1.0 + 0.37 * j as f64, 0.11 * ((j * j) % 7) as f64))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    for step in 0..n {
        let mut w = hermitian_apply(h, &v);
        let alpha = dot(&v, &w).re;
        diag.push(alpha);
        basis.push(v.clone());
        if step + 1 == n {
            break;
        }
        orthogonalise(&mut w, &basis);
        let beta = norm2(&w);
        if beta <= 1e-13 * scale {
            off.push(0.0);
            match fresh_direction(n, &basis) {
                Some(e) => v = e,
                None => break,
            }
        } else {
            off.push(beta);
            v = w.iter().map(|z| z / beta).collect();
        }
    }
    off.truncate(diag.len().saturating_sub(1));
    tridiagonal_max_eigenvalue(&diag, &off)
}

/// Largest eigenvalue of a real symmetric tridiagonal matrix by bisection
/// on the Sturm sequence count.
fn tridiagonal_max_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = off.get(i).map_or(0.0, |b| b.abs())
            + if i > 0 { off[i - 1].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    // Invariant: count_below(lo) < n, count_below(hi) == n.
    let width = (hi - lo).abs().max(f64::MIN_POSITIVE);
    hi += 1e-12 * width;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn commutator(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    require_square(x)?;
    if x.dim() != y.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(&(x * y) - &(y * x))
}

/// `‖U*U − I‖`.
pub fn unitarity_defect(u: &ComplexMatrix) -> Result<f64, LinalgError> {
    require_square(u)?;
    let gram = &u.adjoint() * u;
    Ok(operator_norm(&(&gram - &ComplexMatrix::identity(u.rows))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e, ComplexMatrix::identity(2));
    }

    #[test]
    fn exp_of_diag_i_pi() {
        let m = ComplexMatrix::from_diag(&[c(0.0, PI), c(0.0, -PI)]);
        let e = matrix_exp(&m).unwrap();
        let minus_id = ComplexMatrix::identity(2).scale_re(-1.0);
        assert!((&e - &minus_id).max_abs() < 1e-14);
    }

    #[test]
    fn exp_rejects_non_square() {
        assert_eq!(
            matrix_exp(&ComplexMatrix::zeros(2, 3)),
            Err(LinalgError::NotSquare { rows: 2, cols: 3 })
        );
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        // diag(20i): 1-norm far above the threshold.
        let m = ComplexMatrix::from_diag(&[c(0.0, 20.0), c(0.0, -7.5)]);
        let e = matrix_exp(&m).unwrap();
        assert!((e[(0, 0)] - c(0.0, 20.0).exp()).norm() < 1e-12);
        assert!((e[(1, 1)] - c(0.0, -7.5).exp()).norm() < 1e-12);
    }

    #[test]
    fn norm_examples() {
        assert!((operator_norm(&ComplexMatrix::identity(3)) - 1.0).abs() < 1e-14);
        let d = ComplexMatrix::from_diag(&[c(0.0, 3.0), c(0.0, -2.0)]);
        assert!((operator_norm(&d) - 3.0).abs() < 1e-13);
        assert_eq!(operator_norm(&ComplexMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn norm_of_rectangular_row_block() {
        // Rank one: norm is the Euclidean length of the row.
        let m = ComplexMatrix::from_rows(&[vec![c(3.0, 0.0), c(0.0, 4.0)]]).unwrap();
        assert!((operator_norm(&m) - 5.0).abs() < 1e-13);
    }

    #[test]
    fn norm_with_repeated_top_singular_value() {
        let d = ComplexMatrix::from_diag(&[c(2.0, 0.0), c(0.0, 2.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((operator_norm(&d) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn commutator_examples() {
        let b12 = c(0.0, -1.0 / 2f64.sqrt());
        let x = ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), b12 * C64::i()],
            vec![-(b12 * C64::i()).conj(), c(0.0, 0.0)],
        ])
        .unwrap();
        let y =
            ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), b12], vec![-b12.conj(), c(0.0, 0.0)]])
                .unwrap();
        let xy = commutator(&x, &y).unwrap();
        let expected = ComplexMatrix::from_diag(&[c(0.0, -1.0), c(0.0, 1.0)]);
        assert!((&xy - &expected).max_abs() < 1e-15);
        assert_eq!(commutator(&x, &x).unwrap().max_abs(), 0.0);
        let lhs = commutator(&x.scale_re(2.0), &y).unwrap();
        assert!((&lhs - &xy.scale_re(2.0)).max_abs() < 1e-15);
        assert!(matches!(
            commutator(&x, &ComplexMatrix::identity(3)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unitarity_defect_examples() {
        assert_eq!(unitarity_defect(&ComplexMatrix::identity(4)).unwrap(), 0.0);
        let two = ComplexMatrix::identity(3).scale_re(2.0);
        assert!((unitarity_defect(&two).unwrap() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn solve_recovers_rhs() {
        let a = ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(2.0, 1.0)],
            vec![c(1.0, -1.0), c(3.0, 0.0)],
        ])
        .unwrap();
        let x = ComplexMatrix::from_rows(&[vec![c(1.0, 2.0)], vec![c(-0.5, 0.25)]]).unwrap();
        let b = &a * &x;
        let sol = a.solve(&b).unwrap();
        assert!((&sol - &x).max_abs() < 1e-14);
        assert_eq!(
            ComplexMatrix::zeros(2, 2).solve(&x),
            Err(LinalgError::Singular)
        );
    }

    #[test]
    fn wrappers_check_invariants() {
        let skew = ComplexMatrix::from_rows(&[
            vec![c(0.0, 1.0), c(1.0, 2.0)],
            vec![c(-1.0, 2.0), c(0.0, -3.0)],
        ])
        .unwrap();
        assert!(SkewHermitianMatrix::new(skew.clone()).is_ok());
        assert!(SkewHermitianMatrix::new(ComplexMatrix::identity(2)).is_err());
        let u = matrix_exp(&skew).unwrap();
        assert!(UnitaryMatrix::new(u).is_ok());
        assert!(UnitaryMatrix::new(ComplexMatrix::identity(2).scale_re(2.0)).is_err());
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert_eq!(
            ComplexMatrix::from_vec(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(LinalgError::NonFinite)
        );
        assert!(ComplexMatrix::from_vec(2, 2, vec![c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn powi_matches_repeated_product() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(0.5, 0.1), c(0.2, 0.0)],
            vec![c(0.0, -0.3), c(0.9, 0.0)],
        ])
        .unwrap();
        let mut expect = ComplexMatrix::identity(2);
        for _ in 0..13 {
            expect = &expect * &m;
        }
        assert!((&m.powi(13).unwrap() - &expect).max_abs() < 1e-14);
    }
}
