//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::time::Instant;

use ensemble_core::averaging::{error_bound, track_rotation, TrackingOptions};
use ensemble_core::galerkin::{ensemble_propagate, truncation_consistency, uniform_grid};
use ensemble_core::linalg::{matrix_exp, operator_norm, unitarity_defect, ComplexMatrix, C64};
use ensemble_core::pipeline::{rotor_source, run_pipeline, run_trend, PipelineConfig};
use ensemble_core::rotor::{build_planar_rotor, orientation_target};
use ensemble_core::spectral::{truncate, validate_assumptions, AssumptionItem, SpectralModel};
use ensemble_core::su2::{
    bracket_generator, bracket_of_word, commutator_defect, evaluate_pulse_train, even_bracket_word,
    fit_odd_angle_curve, rotating_frame, AuxGenerator, Letter, PulseTrain, Segment,
};
use ensemble_core::target::ModulusTarget;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn b12() -> C64 {
    C64::new(0.0, -1.0 / 2f64.sqrt())
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_skew(rng: &mut StdRng, n: usize, norm: f64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = C64::new(0.0, rng.random_range(-1.0..1.0));
        for k in j + 1..n {
            let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(j, k)] = z;
            m[(k, j)] = -z.conj();
        }
    }
    let s = norm / operator_norm(&m);
    m.scale_re(s)
}

/// Plain Taylor sum; fine for norms up to 2.
fn series_exp(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.rows();
    let mut sum = ComplexMatrix::identity(n);
    let mut term = ComplexMatrix::identity(n);
    for k in 1..60 {
        term = (&term * m).scale_re(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

fn kernel() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let (mut worst, mut worst_unit) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let n = 2 + i % 15;
        let norm = rng.random_range(0.01..2.0);
        let a = random_skew(&mut rng, n, norm);
        let e = matrix_exp(&a).map_err(|e| e.to_string())?;
        worst = worst.max(operator_norm(&(&e - &series_exp(&a))));
        worst_unit = worst_unit.max(unitarity_defect(&e).map_err(|e| e.to_string())?);
    }
    check(
        worst <= 1e-12 && worst_unit <= 1e-10,
        format!("max expm error {worst:.2e}, max unitarity defect {worst_unit:.2e}"),
    )
}

fn modulus_invariance() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let x = AuxGenerator::x(b12()).unwrap();
    let y = AuxGenerator::y(b12()).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let len = rng.random_range(1..40);
        let train = PulseTrain {
            segments: (0..len)
                .map(|_| Segment {
                    letter: if rng.random_bool(0.5) { Letter::X } else { Letter::Y },
                    duration: rng.random_range(-2.0..2.0),
                })
                .collect(),
        };
        let b11 = C64::new(0.0, rng.random_range(-3.0..3.0));
        let b22 = C64::new(0.0, rng.random_range(-3.0..3.0));
        let t = rng.random_range(0.0..10.0);
        for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let u = evaluate_pulse_train(&train, &x, &y, a).unwrap().into_matrix();
            let v = rotating_frame(&u, t, b11, b22, a).unwrap();
            for (p, q) in u.moduli().iter().zip(v.moduli()) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("max modulus change {worst:.2e}"))
}

fn bracket_convergence() -> Outcome {
    let x = AuxGenerator::x(b12()).unwrap();
    let y = AuxGenerator::y(b12()).unwrap();
    let grid = uniform_grid(21);
    let mut e = Vec::new();
    let mut dominated = true;
    for n in [8u64, 16, 32, 64] {
        let t = 1.0 / (n as f64).sqrt();
        let mut sup = 0.0f64;
        for &a in &grid {
            let d = commutator_defect(x.matrix(), y.matrix(), t, n, a).unwrap();
            dominated &= d.power <= n as f64 * d.single_step + 1e-14;
            sup = sup.max(d.power);
        }
        e.push(sup);
    }
    let ratios: Vec<f64> = e.windows(2).map(|w| w[1] / w[0]).collect();
    check(
        ratios.iter().all(|&r| r <= 0.85) && dominated,
        format!("E = {e:.3?}, ratios {ratios:.3?}, power defect <= n * step defect: {dominated}"),
    )
}

fn bracket_structure() -> Outcome {
    let b = b12();
    let x = AuxGenerator::x(b).unwrap();
    let y = AuxGenerator::y(b).unwrap();
    let mut worst = 0.0f64;
    for k in 0..4 {
        let m = bracket_generator(b, k).unwrap();
        worst = worst.max(m[(0, 0)].norm()).max(m[(1, 1)].norm());
        let want = 4f64.powi(k as i32) * b.norm().powi(2 * k as i32 + 1);
        worst = worst.max((m[(0, 1)].norm() - want).abs()).max((m[(1, 0)].norm() - want).abs());
        let a = 0.5;
        let scaled = bracket_of_word(
            &even_bracket_word(k),
            &x.matrix().scale_re(a),
            &y.matrix().scale_re(a),
        )
        .unwrap();
        worst = worst.max((&scaled - &m.scale_re(a.powi(2 * k as i32 + 1))).max_abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:.2e} for k = 0..3"))
}

fn full_transfer_errors(ns: &[usize]) -> Result<Vec<(usize, f64, f64)>, String> {
    let system = truncate(&build_planar_rotor(5).unwrap(), 5).unwrap();
    let grid = uniform_grid(21);
    let norm_b = operator_norm(system.b());
    let r = FRAC_PI_2 / b12().norm();
    ns.iter()
        .map(|&n| {
            let opts = TrackingOptions {
                n: Some(n),
                ..Default::default()
            };
            let tr = track_rotation(&system, &grid, 0.0, r, 1.0, &opts).map_err(|e| e.to_string())?;
            let props = ensemble_propagate(&system, &tr.control, &grid).map_err(|e| e.to_string())?;
            let e = props
                .iter()
                .zip(&tr.predictions)
                .map(|(u, p)| operator_norm(&(u.as_matrix() - p.as_matrix())))
                .fold(0.0, f64::max);
            Ok((n, e, error_bound(&tr.constants, norm_b, n)))
        })
        .collect()
}

fn averaging() -> Outcome {
    let system = truncate(&build_planar_rotor(5).unwrap(), 5).unwrap();
    let opts = TrackingOptions::default();
    let tr = track_rotation(&system, &[], 0.0, FRAC_PI_2 / b12().norm(), 1.0, &opts).map_err(|e| e.to_string())?;
    let c = &tr.constants;
    let consts_ok = (c.i - 4.0).abs() < 1e-9
        && (c.t_star - 2f64.sqrt() * PI).abs() < 1e-9
        && (c.k - 2.0 * 2f64.sqrt()).abs() < 1e-9
        && c.c == 0.0;
    let rows = full_transfer_errors(&[2, 4, 8, 16])?;
    let halving = rows.windows(2).all(|w| w[1].1 <= 0.6 * w[0].1);
    let bounded = rows.iter().all(|&(_, e, b)| b >= 2.0 || e <= b);
    let table: Vec<String> = rows.iter().map(|(n, e, b)| format!("n={n} E={e:.4} bound={b:.3}")).collect();
    check(
        consts_ok && halving && bounded,
        format!(
            "I={} T*={:.6} K={:.6} C={}; {}",
            c.i,
            c.t_star,
            c.k,
            c.c,
            table.join(", ")
        ),
    )
}

fn rabi() -> Outcome {
    let system = truncate(&build_planar_rotor(2).unwrap(), 2).unwrap();
    let n = 8;
    let opts = TrackingOptions {
        n: Some(n),
        samples_per_period: 400,
        ..Default::default()
    };
    let grid = uniform_grid(11);
    let tr = track_rotation(&system, &grid, 0.0, FRAC_PI_2 / b12().norm(), 1.0, &opts).map_err(|e| e.to_string())?;
    let props = ensemble_propagate(&system, &tr.control, &grid).map_err(|e| e.to_string())?;
    let t = tr.control.total_duration();
    let mut worst = 0.0f64;
    for (&a, u) in grid.iter().zip(&props) {
        // Resonant rotating-wave solution: Rabi angle |b12| α t / (2n).
        let p = (b12().norm() * a * t / (2.0 * n as f64)).sin().powi(2);
        worst = worst.max((u.as_matrix()[(1, 0)].norm_sqr() - p).abs());
    }
    check(worst <= 2e-3, format!("max population deviation {worst:.2e} at n = {n}, t = {t:.3}"))
}

fn truncation() -> Outcome {
    let model = build_planar_rotor(9).unwrap();
    let small = truncate(&model, 5).unwrap();
    let opts = TrackingOptions {
        n: Some(8),
        ..Default::default()
    };
    let tr = track_rotation(&small, &[], 0.0, FRAC_PI_2 / b12().norm(), 1.0, &opts).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut worst = (0.0, 0.0, 0.0);
    for a in [0.25, 0.5, 0.75, 1.0] {
        let c = truncation_consistency(&model, &tr.control, a, 5, 9, Some(&tr.constants.m_dagger))
            .map_err(|e| e.to_string())?;
        ok &= c.tail == 0.0 && c.distance <= c.bound;
        if c.distance > worst.0 {
            worst = (c.distance, c.bound, c.tail);
        }
    }
    check(
        ok,
        format!("largest distance {:.3e} against bound {:.3e}, tail {}", worst.0, worst.1, worst.2),
    )
}

fn single_rotation() -> Outcome {
    let cfg = PipelineConfig::new(rotor_source(5), ModulusTarget::Cosine { c: PI / 4.0 }, 0.1, 1.0);
    let o = run_pipeline(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let s = &o.summary;
    check(
        s.sup_error <= 0.05,
        format!("sup moduli error {:.3e} over {} points, {} stages", s.sup_error, s.grid_points, s.stages),
    )
}

/// Least squares over a dense grid via modified Gram-Schmidt on odd monomials.
fn dense_oracle(f: impl Fn(f64) -> f64, degree: usize, points: usize) -> Vec<f64> {
    let m = degree.div_ceil(2);
    let xs = uniform_grid(points);
    let cols: Vec<Vec<f64>> = (0..m).map(|l| xs.iter().map(|x| x.powi(2 * l as i32 + 1)).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r = vec![vec![0.0; m]; m];
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.clone();
        for (i, qi) in q.iter().enumerate() {
            let c = dot(qi, &v);
            r[i][j] = c;
            v.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
        }
        let nrm = dot(&v, &v).sqrt();
        r[j][j] = nrm;
        q.push(v.iter().map(|a| a / nrm).collect());
    }
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, &ys)).collect();
    let mut c = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| r[i][k] * c[k]).sum();
        c[i] = (qty[i] - s) / r[i][i];
    }
    c
}

fn orientation() -> Outcome {
    let target = orientation_target();
    let samples: Vec<(f64, f64)> = uniform_grid(201).into_iter().map(|a| (a, target.angle(a))).collect();
    let fit = fit_odd_angle_curve(&samples, 9, 1e-3).map_err(|e| e.to_string())?;
    let oracle = dense_oracle(|a| target.angle(a), 9, 4001);
    let oracle_sup = samples
        .iter()
        .map(|&(a, r)| {
            let p: f64 = oracle.iter().enumerate().map(|(l, c)| c * a.powi(2 * l as i32 + 1)).sum();
            (p - r).abs()
        })
        .fold(0.0, f64::max);
    let fit_ok = fit.sup_error <= oracle_sup + 1e-8;

    let cfg = PipelineConfig::orientation_preset(5, 0.1, 1.0);
    let rows = run_trend(&cfg, Path::new("."), &[32, 64]).map_err(|e| e.to_string())?;
    let trend_ok = rows[1].sup_error <= rows[0].sup_error;
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "n={} degree {} sup {:.4} (fit floor {:.4}, two-level {:.4})",
                r.n, r.fit_degree, r.sup_error, r.fit_floor, r.aux_error
            )
        })
        .collect();
    check(
        fit_ok && trend_ok,
        format!(
            "degree-9 fit {:.6e} vs dense oracle {:.6e}; {}",
            fit.sup_error,
            oracle_sup,
            table.join("; ")
        ),
    )
}

fn validator() -> Outcome {
    let rotor_ok = (2..=21).all(|n| validate_assumptions(&build_planar_rotor(n).unwrap()).unwrap().passed);
    let c = |re: f64, im: f64| C64::new(re, im);
    let spaced = SpectralModel::new(
        vec![0.0, 1.0, 2.0],
        [(0, 1, c(1.0, 0.0)), (1, 2, c(0.5, 0.0)), (0, 2, c(0.0, 0.3))],
        None,
    )
    .unwrap();
    let r1 = validate_assumptions(&spaced).unwrap();
    let spaced_ok = !r1.passed
        && r1.violations.iter().any(|v| v.item == AssumptionItem::NonDegeneracy && v.indices == vec![(1, 2)]);
    let uncoupled = SpectralModel::new(vec![0.0, 1.0, 5.0], [(1, 2, c(1.0, 0.0))], None).unwrap();
    let r2 = validate_assumptions(&uncoupled).unwrap();
    let zero_ok =
        !r2.passed && r2.violations.iter().any(|v| v.item == AssumptionItem::Coupling && v.indices == vec![(0, 1)]);
    check(
        rotor_ok && spaced_ok && zero_ok,
        format!("rotor N=2..21 passes: {rotor_ok}; equally spaced flags (1,2): {spaced_ok}; b(0,1)=0 flagged: {zero_ok}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("kernel correctness", kernel),
        ("modulus invariance", modulus_invariance),
        ("uniform bracket convergence", bracket_convergence),
        ("bracket homogeneity and structure", bracket_structure),
        ("averaging on the rotor", averaging),
        ("two-level Rabi oracle", rabi),
        ("truncation consistency", truncation),
        ("single-rotation ensemble target", single_rotation),
        ("orientation scenario trend", orientation),
        ("assumption validator", validator),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {:>2} PASS {name} [{secs:.1}s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.1}s]: {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
