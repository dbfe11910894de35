//! Odd polynomial approximation of a rotation-angle curve.
//!
//! The fit minimises the sup error over the given samples. Odd monomials
//! `α, α³, …` form a Haar system on `(0, 1]`, so a discrete exchange
//! iteration converges to the best uniform approximation on the sample set.
//! The least-squares solution seeds the exchange and is kept as a fallback.

use serde::{Deserialize, Serialize};

use super::Su2Error;

/// `ρ(α) = Σ_l c_l α^{2l+1}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OddAngleCurve {
    pub coefficients: Vec<f64>,
}

impl OddAngleCurve {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        // Horner in α².
        let a2 = alpha * alpha;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * a2 + c)
            * alpha
    }

    pub fn degree(&self) -> usize {
        2 * self.coefficients.len().saturating_sub(1) + 1
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub curve: OddAngleCurve,
    /// `max_i |ρ_i − curve(α_i)|` over all samples.
    pub sup_error: f64,
    pub within_tolerance: bool,
}

fn odd_basis(alpha: f64, terms: usize) -> impl Iterator<Item = f64> {
    let a2 = alpha * alpha;
    (0..terms).scan(alpha, move |p, _| {
        let v = *p;
        *p *= a2;
        Some(v)
    })
}

fn sup_error(samples: &[(f64, f64)], curve: &OddAngleCurve) -> f64 {
    samples
        .iter()
        .map(|&(a, r)| (r - curve.eval(a)).abs())
        .fold(0.0, f64::max)
}

/// Fits `ρ` by an odd polynomial of the given degree.
pub fn fit_odd_angle_curve(
    samples: &[(f64, f64)],
    degree: usize,
    tolerance: f64,
) -> Result<FitResult, Su2Error> {
    if degree.is_multiple_of(2) {
        return Err(Su2Error::InvalidDegree(degree));
    }
    let terms = degree.div_ceil(2);
    for &(a, r) in samples {
        if !a.is_finite() || !r.is_finite() {
            return Err(Su2Error::NonFinite);
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Su2Error::SampleOutOfRange(a));
        }
    }
    // Distinct positive abscissae; α = 0 carries no information for odd maps.
    let mut pts: Vec<(f64, f64)> = samples.iter().copied().filter(|(a, _)| *a > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < terms {
        return Err(Su2Error::DegenerateSamples {
            distinct: pts.len(),
            needed: terms,
        });
    }

    let coefficients = if pts.len() == terms {
        let rows: Vec<Vec<f64>> = pts.iter().map(|(a, _)| odd_basis(*a, terms).collect()).collect();
        let rhs: Vec<f64> = pts.iter().map(|p| p.1).collect();
        solve_dense(rows, rhs).ok_or(Su2Error::DegenerateSamples {
            distinct: pts.len(),
            needed: terms,
        })?
    } else {
        let ls = least_squares(&pts, terms);
        let ls_curve = OddAngleCurve::new(ls.clone());
        let ls_err = sup_error(&pts, &ls_curve);
        match minimax_exchange(&pts, terms) {
            Some(mm) if sup_error(&pts, &OddAngleCurve::new(mm.clone())) <= ls_err => mm,
            _ => ls,
        }
    };
    let curve = OddAngleCurve::new(coefficients);
    let sup = sup_error(samples, &curve);
    Ok(FitResult {
        curve,
        sup_error: sup,
        within_tolerance: sup <= tolerance,
    })
}

/// Least squares by Householder QR of the odd Vandermonde matrix.
fn least_squares(pts: &[(f64, f64)], terms: usize) -> Vec<f64> {
    let m = pts.len();
    let mut a: Vec<Vec<f64>> = pts.iter().map(|(x, _)| odd_basis(*x, terms).collect()).collect();
    let mut b: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for k in 0..terms {
        let norm = (k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..terms {
            let s: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                a[i][j] -= s * v[i - k];
            }
        }
        let s: f64 = (k..m).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in k..m {
            b[i] -= s * v[i - k];
        }
    }
    let mut x = vec![0.0; terms];
    for k in (0..terms).rev() {
        let acc: f64 = (k + 1..terms).map(|j| a[k][j] * x[j]).sum();
        x[k] = if a[k][k] != 0.0 { (b[k] - acc) / a[k][k] } else { 0.0 };
    }
    x
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(piv, col);
        b.swap(piv, col);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let acc: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - acc) / a[r][r];
    }
    Some(x)
}

/// Single-point exchange on the discrete set `pts` (sorted, distinct, α > 0).
fn minimax_exchange(pts: &[(f64, f64)], terms: usize) -> Option<Vec<f64>> {
    let m = pts.len();
    let refs = terms + 1;
    let mut reference: Vec<usize> = (0..refs)
        .map(|i| ((i as f64) * (m - 1) as f64 / (refs - 1) as f64).round() as usize)
        .collect();
    reference.dedup();
    if reference.len() != refs {
        reference = (0..refs).collect();
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..1000 {
        let rows: Vec<Vec<f64>> = reference
            .iter()
            .enumerate()
            .map(|(i, &idx)| {
                let mut row: Vec<f64> = odd_basis(pts[idx].0, terms).collect();
                row.push(if i % 2 == 0 { 1.0 } else { -1.0 });
                row
            })
            .collect();
        let rhs: Vec<f64> = reference.iter().map(|&idx| pts[idx].1).collect();
        let sol = solve_dense(rows, rhs)?;
        let level = sol[terms].abs();
        let coeffs = sol[..terms].to_vec();
        let curve = OddAngleCurve::new(coeffs.clone());
        let errs: Vec<f64> = pts.iter().map(|&(a, r)| r - curve.eval(a)).collect();
        let (worst, worst_err) = errs
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.abs()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best.as_ref().is_none_or(|(b, _)| worst_err < *b) {
            best = Some((worst_err, coeffs));
        }
        if worst_err <= level * (1.0 + 1e-12) + 1e-15 || reference.contains(&worst) {
            break;
        }
        let sign = |i: usize| errs[i] >= 0.0;
        let s = sign(worst);
        let pos = reference.partition_point(|&r| r < worst);
        if pos == 0 {
            if sign(reference[0]) == s {
                reference[0] = worst;
            } else {
                reference.pop();
                reference.insert(0, worst);
            }
        } else if pos == refs {
            if sign(reference[refs - 1]) == s {
                reference[refs - 1] = worst;
            } else {
                reference.remove(0);
                reference.push(worst);
            }
        } else if sign(reference[pos - 1]) == s {
            reference[pos - 1] = worst;
        } else {
            reference[pos] = worst;
        }
    }
    best.map(|(_, c)| c)
}
