//! Ensemble targets given by the modulus curve `m(α) = |⟨φ₀, Υ̂^α φ₀⟩|`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusTarget {
    /// `m ≡ 1`.
    Identity,
    /// `m(α) = |cos(c α)|`, a single rotation with angle linear in α.
    Cosine { c: f64 },
    /// `m = 1` below `keep_below`, `m = 0` above `transfer_above`, cubic
    /// smoothstep in between.
    Plateau { keep_below: f64, transfer_above: f64 },
    /// Piecewise-linear through `(α, m)` points sorted by α.
    Table { points: Vec<(f64, f64)> },
}

impl ModulusTarget {
    pub fn modulus(&self, alpha: f64) -> f64 {
        let m = match self {
            Self::Identity => 1.0,
            Self::Cosine { c } => (c * alpha).cos().abs(),
            Self::Plateau {
                keep_below,
                transfer_above,
            } => {
                if alpha <= *keep_below {
                    1.0
                } else if alpha >= *transfer_above {
                    0.0
                } else {
                    let x = (alpha - keep_below) / (transfer_above - keep_below);
                    1.0 - x * x * (3.0 - 2.0 * x)
                }
            }
            Self::Table { points } => interpolate(points, alpha),
        };
        m.clamp(0.0, 1.0)
    }

    /// Rotation angle `ρ(α) = arccos m(α) ∈ [0, π/2]`.
    pub fn angle(&self, alpha: f64) -> f64 {
        self.modulus(alpha).acos()
    }

    /// Moduli table `[[m, s], [s, m]]` with `s = √(1 − m²)`, row-major.
    pub fn moduli_table(&self, alpha: f64) -> [f64; 4] {
        let m = self.modulus(alpha);
        let s = (1.0 - m * m).max(0.0).sqrt();
        [m, s, s, m]
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    /// Upper bound on `|dm/dα|` over `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::Cosine { c } => c.abs(),
            Self::Plateau {
                keep_below,
                transfer_above,
            } => 1.5 / (transfer_above - keep_below),
            Self::Table { points } => points
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }
}

fn interpolate(points: &[(f64, f64)], alpha: f64) -> f64 {
    match points {
        [] => 1.0,
        [(_, m)] => *m,
        _ => {
            if alpha <= points[0].0 {
                return points[0].1;
            }
            for w in points.windows(2) {
                let ((a0, m0), (a1, m1)) = (w[0], w[1]);
                if alpha <= a1 {
                    let t = if a1 > a0 { (alpha - a0) / (a1 - a0) } else { 1.0 };
                    return m0 + t * (m1 - m0);
                }
            }
            points[points.len() - 1].1
        }
    }
}
