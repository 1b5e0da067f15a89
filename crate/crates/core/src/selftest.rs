//! Runnable acceptance checks over the field catalog and random scales.
//!
//! Each criterion returns a [`CriterionResult`]; the integration test suite
//! asserts them and the CLI `selftest` verb runs the same list and writes
//! the outcomes as artifacts. Oracles here are independent of the code
//! paths they check: plain summation loops, bisection root solves and
//! closed-form solutions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{
    composition_identity_residual, ibp_residual_i, ibp_residual_ii, inverse_identity_residual,
    SmoothGridFunction,
};
use crate::dynamics::{
    residual_star1, residual_star2, solve_derivative_form, solve_integral_form, SolverConfig,
};
use crate::expr::{parse_expr, EvalCtx, Expr, Var, VarSet};
use crate::hamiltonian::{ExprHamiltonian, Hamiltonian};
use crate::helmholtz::{catalog, check_conditions, reconstruct, roundtrip_residual, CheckOptions, Verdict};
use crate::timescale::TimeScale;
use crate::variational::{frechet_action, random_variation, selfadjointness_residual, PhasePath};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value against the binding threshold.
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CriterionResult {
    fn new(index: usize, name: &'static str, worst: f64, threshold: f64, detail: String) -> Self {
        CriterionResult { index, name, passed: worst <= threshold, worst, threshold, detail }
    }
}

/// Random bounded scale mixing intervals and isolated points; junction
/// points are expected and handled pointwise by the operations under test.
pub fn random_mixed_scale(rng: &mut ChaCha8Rng) -> Arc<TimeScale<f64>> {
    let n_segments = rng.gen_range(3..=50);
    let mut segments = Vec::with_capacity(n_segments);
    let mut t = rng.gen_range(-1.0..1.0);
    for _ in 0..n_segments {
        if rng.gen_bool(0.35) {
            let len = rng.gen_range(0.05..0.4);
            segments.push((t, t + len));
            t += len;
        } else {
            segments.push((t, t));
        }
        t += rng.gen_range(0.05..0.5);
    }
    let span: f64 = segments.last().unwrap().1 - segments[0].0;
    let step = (span / 500.0).min(1.5e-3);
    Arc::new(TimeScale::new(segments, Some(step)).unwrap())
}

/// Random admissible discrete scale with non-uniform gaps.
pub fn random_discrete_scale(rng: &mut ChaCha8Rng) -> Arc<TimeScale<f64>> {
    let n = rng.gen_range(8..=40);
    let mut t = rng.gen_range(-1.0..1.0);
    let mut pts = vec![t];
    for _ in 0..n {
        t += rng.gen_range(0.02..0.3);
        pts.push(t);
    }
    Arc::new(TimeScale::from_points(&pts).unwrap())
}

fn smooth_probe(scale: &Arc<TimeScale<f64>>, rng: &mut ChaCha8Rng) -> SmoothGridFunction<f64> {
    let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = rng.gen_range(0.5..2.0);
    let f = {
        let c = c.clone();
        move |t: f64| vec![c[0] + c[1] * t + c[2] * (w * t).sin()]
    };
    let df = {
        let c = c.clone();
        move |t: f64| vec![c[1] + c[2] * w * (w * t).cos()]
    };
    SmoothGridFunction::from_closures(scale.clone(), 1, f, df)
}

/// Criterion 1: jump-operator identities on random scales.
pub fn criterion_operator_identities(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_inverse_scattered: f64 = 0.0;
    let mut worst_inverse_dense: f64 = 0.0;
    let mut worst_composition: f64 = 0.0;
    let mut tested = 0usize;
    for _ in 0..100 {
        let scale = random_mixed_scale(&mut rng);
        let probe = crate::calculus::GridFunction::sample_scalar(scale.clone(), |t| (0.7 * t).sin());
        let grid = scale.grid();
        let n = grid.len();
        let stride = (n / 60).max(1);
        for i in (0..n).step_by(stride) {
            if !scale.in_core_domain_idx(i) || scale.is_junction_idx(i) {
                continue;
            }
            let t = grid.point(i);
            let inv = inverse_identity_residual(scale.as_ref(), t).unwrap();
            if scale.class_idx(i).is_right_scattered() {
                worst_inverse_scattered = worst_inverse_scattered.max(inv);
            } else {
                worst_inverse_dense = worst_inverse_dense.max(inv);
            }
            let comp = composition_identity_residual(&probe, t).unwrap();
            worst_composition = worst_composition.max(comp.max());
            tested += 1;
        }
    }
    let pass = worst_inverse_scattered == 0.0
        && worst_inverse_dense <= 1e-10
        && worst_composition <= 1e-6;
    CriterionResult {
        index: 1,
        name: "operator_identities",
        passed: pass,
        worst: worst_composition,
        threshold: 1e-6,
        detail: format!(
            "{tested} points; inverse scattered {worst_inverse_scattered:.2e} (must be 0), \
             inverse dense {worst_inverse_dense:.2e} (<= 1e-10), composition {worst_composition:.2e}"
        ),
    }
}

/// Criterion 2: both integration-by-parts residuals on mixed scales.
///
/// The second form needs `rho^delta` on the whole range, so the generated
/// scales place the single dense segment first; the dense-to-scattered
/// junction it ends with is harmless for either formula.
pub fn criterion_integration_by_parts(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst_ratio: f64 = 0.0;
    let mut detail = String::new();
    for scale_idx in 0..10 {
        let a = rng.gen_range(-1.0..0.0);
        let len = rng.gen_range(0.3..0.6);
        let mut segments = vec![(a, a + len)];
        let mut t = a + len;
        let n_pts = rng.gen_range(3..10);
        for _ in 0..n_pts {
            t += rng.gen_range(0.05..0.3);
            segments.push((t, t));
        }
        let scale = Arc::new(TimeScale::new(segments, Some(1e-3)).unwrap());
        let (c, d) = (scale.a(), scale.b());
        for _ in 0..50 {
            let f = smooth_probe(&scale, &mut rng);
            let g = smooth_probe(&scale, &mut rng);
            let nf = crate::variational::l2_norm(&f.values).unwrap();
            let ng = crate::variational::l2_norm(&g.values).unwrap();
            let bound = 1e-10f64.max(10.0 * scale.dense_step().powi(2) * nf * ng);
            let r1 = ibp_residual_i(&f, &g, c, d).unwrap();
            let r2 = ibp_residual_ii(&f, &g, c, d).unwrap();
            worst_ratio = worst_ratio.max(r1 / bound).max(r2 / bound);
        }
        if scale_idx == 9 {
            detail = format!("10 scales x 50 pairs; worst residual/bound ratio {worst_ratio:.3}");
        }
    }
    CriterionResult::new(2, "integration_by_parts", worst_ratio, 1.0, detail)
}

/// Criterion 3: Helmholtz classification of the six-field catalog.
pub fn criterion_helmholtz_catalog(seed: u64) -> CriterionResult {
    let mut all_ok = true;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for entry in catalog::<f64>() {
        let report = check_conditions(
            entry.field.as_ref(),
            -1.0,
            1.0,
            CheckOptions { samples: 128, tol: Some(1e-8), seed },
        )
        .unwrap();
        let got = report.verdict == Verdict::Hamiltonian;
        if got != entry.hamiltonian {
            all_ok = false;
            notes.push(format!("{} misclassified", entry.name));
        }
        if entry.name == "damped_oscillator" {
            let err = (report.trace_violation - 0.1).abs();
            worst = worst.max(err);
            if err > 1e-8 {
                all_ok = false;
                notes.push(format!(
                    "damped trace violation {} outside 0.1 +- 1e-8",
                    report.trace_violation
                ));
            }
        }
    }
    CriterionResult {
        index: 3,
        name: "helmholtz_catalog",
        passed: all_ok,
        worst,
        threshold: 1e-8,
        detail: if notes.is_empty() {
            "all six fields classified correctly; damped trace within 1e-8 of 0.1".to_string()
        } else {
            notes.join("; ")
        },
    }
}

/// Criterion 4: reconstruction round trip for the Hamiltonian catalog fields.
pub fn criterion_reconstruction_roundtrip(seed: u64) -> CriterionResult {
    let mut worst_roundtrip: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    for entry in catalog::<f64>() {
        if !entry.hamiltonian {
            continue;
        }
        let h = reconstruct(entry.field.clone(), 32);
        let r = roundtrip_residual(entry.field.as_ref(), &h, -1.0, 1.0, 128, seed).unwrap();
        worst_roundtrip = worst_roundtrip.max(r);
        let analytic = entry.analytic.as_ref().unwrap();
        let d = entry.field.dim();
        for _ in 0..128 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = (h.eval(&q, &p) - analytic(&q, &p)).abs();
            worst_value = worst_value.max(err);
        }
    }
    let passed = worst_roundtrip <= 1e-8 && worst_value <= 1e-10;
    CriterionResult {
        index: 4,
        name: "reconstruction_roundtrip",
        passed,
        worst: worst_roundtrip,
        threshold: 1e-8,
        detail: format!(
            "roundtrip {worst_roundtrip:.2e} (<= 1e-8), value error {worst_value:.2e} (<= 1e-10) \
             at 128 samples per field"
        ),
    }
}

/// Criterion 5: variational self-adjointness splits the catalog on the
/// reference mixed scale.
pub fn criterion_variational_agreement(seed: u64) -> CriterionResult {
    let scale = Arc::new(
        TimeScale::new(
            vec![(0.0, 0.5), (0.6, 0.6), (0.7, 0.7), (0.8, 0.8), (0.9, 0.9), (1.0, 1.0)],
            Some(1e-3),
        )
        .unwrap(),
    );
    let mut worst_hamiltonian: f64 = 0.0;
    let mut damped_residual = 0.0;
    let path = PhasePath::from_closures(
        scale.clone(),
        2,
        |t: f64| vec![(0.9 * t).cos(), 0.3 * t],
        |t: f64| vec![(1.2 * t).sin(), -0.1],
        |t: f64| vec![-0.9 * (0.9 * t).sin(), 0.3],
    );
    let path1 = PhasePath::from_closures(
        scale.clone(),
        1,
        |t: f64| vec![(0.9 * t).cos()],
        |t: f64| vec![(1.2 * t).sin()],
        |t: f64| vec![-0.9 * (0.9 * t).sin()],
    );
    for entry in catalog::<f64>() {
        let d = entry.field.dim();
        let use_path = if d == 1 { &path1 } else { &path };
        let r = selfadjointness_residual(entry.field.as_ref(), use_path, 20, seed).unwrap();
        if entry.hamiltonian {
            worst_hamiltonian = worst_hamiltonian.max(r);
        }
        if entry.name == "damped_oscillator" {
            damped_residual = r;
        }
    }
    let passed = worst_hamiltonian <= 1e-6 && damped_residual >= 100.0 * worst_hamiltonian.max(1e-12);
    CriterionResult {
        index: 5,
        name: "variational_agreement",
        passed,
        worst: worst_hamiltonian,
        threshold: 1e-6,
        detail: format!(
            "hamiltonian residual {worst_hamiltonian:.2e} (<= 1e-6), damped {damped_residual:.2e} \
             (>= 100x)"
        ),
    }
}

/// Criterion 6: solver reductions to the discrete recursion and the
/// classical flow.
pub fn criterion_solver_reductions(_seed: u64) -> CriterionResult {
    let cfg = SolverConfig::default();
    let h = ExprHamiltonian::parse(1, "(q1^2 + p1^2)/2").unwrap();

    // Discrete reduction against an independent bisection-driven recursion.
    let scale = Arc::new(TimeScale::uniform(0.0, 1.0, 10).unwrap());
    let traj = solve_derivative_form(&h, scale.clone(), &[1.0], &[0.0], &cfg).unwrap();
    let mut worst_discrete: f64 = 0.0;
    {
        let g = scale.grid();
        let mut qk = 1.0f64;
        let mut pk = 0.0f64;
        for i in 0..g.len() - 1 {
            let mu = g.point(i + 1) - g.point(i);
            let q_next = qk + mu * pk;
            let gap = if i + 1 == g.len() - 1 {
                g.point(g.len() - 1) - g.point(g.len() - 2)
            } else {
                g.point(i + 2) - g.point(i + 1)
            };
            // Bisection on x + gap * q_next - pk = 0.
            let f = |x: f64| x + gap * q_next - pk;
            let (mut lo, mut hi) = (pk - 10.0, pk + 10.0);
            while f(lo) > 0.0 {
                lo -= 10.0;
            }
            while f(hi) < 0.0 {
                hi += 10.0;
            }
            while hi - lo > 1e-14 {
                let mid = 0.5 * (lo + hi);
                if f(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            qk = q_next;
            pk = 0.5 * (lo + hi);
            worst_discrete = worst_discrete
                .max((traj.q(i + 1)[0] - qk).abs())
                .max((traj.p(i + 1)[0] - pk).abs());
        }
    }

    // Classical reduction on the continuous interval.
    let scale = Arc::new(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
    let traj = solve_derivative_form(&h, scale, &[1.0], &[0.0], &cfg).unwrap();
    let mut worst_classical: f64 = 0.0;
    for i in (0..traj.len()).step_by(53) {
        let t = traj.time(i);
        worst_classical = worst_classical
            .max((traj.q(i)[0] - t.cos()).abs())
            .max((traj.p(i)[0] + t.sin()).abs());
    }

    let passed = worst_discrete <= 1e-12 && worst_classical <= 1e-6;
    CriterionResult {
        index: 6,
        name: "solver_reductions",
        passed,
        worst: worst_discrete.max(worst_classical),
        threshold: 1e-6,
        detail: format!(
            "discrete vs oracle {worst_discrete:.2e} (<= 1e-12), continuous vs (cos, -sin) \
             {worst_classical:.2e} (<= 1e-6)"
        ),
    }
}

/// Criterion 7: solver trajectories are critical points of the action.
pub fn criterion_critical_point(seed: u64) -> CriterionResult {
    let cfg = SolverConfig::default();
    let h = ExprHamiltonian::parse(1, "(q1^2 + p1^2)/2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let scales = vec![
        Arc::new(TimeScale::uniform(0.0, 1.0, 10).unwrap()),
        random_discrete_scale(&mut rng),
        Arc::new(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap()),
    ];
    let mut worst_ratio: f64 = 0.0;
    for scale in scales {
        let traj = solve_derivative_form(&h, scale.clone(), &[1.0], &[0.0], &cfg).unwrap();
        let path = traj.as_phase_path();
        let bound_scale = 1e-6f64.max(10.0 * scale.dense_step().powi(2));
        let per_scale = 50 / 3 + 1;
        for _ in 0..per_scale {
            let var = random_variation(&scale, 1, &mut rng);
            let norm = var.norm().unwrap();
            if norm == 0.0 {
                continue;
            }
            let df = frechet_action(&h, &path, &var).unwrap();
            worst_ratio = worst_ratio.max(df.abs() / (bound_scale * norm));
        }
    }
    CriterionResult::new(
        7,
        "critical_point",
        worst_ratio,
        1.0,
        format!("worst |frechet| over bound ratio {worst_ratio:.3} across 3 admissible scales"),
    )
}

/// Criterion 8: equivalence of the derivative and integral forms.
pub fn criterion_star_equivalence(seed: u64) -> CriterionResult {
    let cfg = SolverConfig::default();
    let h = ExprHamiltonian::parse(1, "(q1^2 + p1^2)/2").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
    let mut worst_uniform: f64 = 0.0;
    let mut worst_mixed: f64 = 0.0;

    // Uniform-discrete scales.
    for steps in [8usize, 10, 16] {
        let scale = Arc::new(TimeScale::uniform(0.0, 1.0, steps).unwrap());
        let td = solve_derivative_form(&h, scale.clone(), &[1.0], &[0.0], &cfg).unwrap();
        worst_uniform = worst_uniform.max(residual_star2(&h, &td));
        let ti = solve_integral_form(&h, scale, &td.c_q, &td.c_p, &cfg).unwrap();
        worst_uniform = worst_uniform.max(residual_star1(&h, &ti));
    }

    // Admissible scales with dense runs and with mixed graininess.
    let dense = Arc::new(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
    let nonuniform = random_discrete_scale(&mut rng);
    for scale in [dense, nonuniform] {
        let bound = 1e-8f64.max(10.0 * scale.dense_step().powi(4));
        let td = solve_derivative_form(&h, scale.clone(), &[1.0], &[0.0], &cfg).unwrap();
        worst_mixed = worst_mixed.max(residual_star2(&h, &td) / bound);
        let ti = solve_integral_form(&h, scale.clone(), &td.c_q, &td.c_p, &cfg).unwrap();
        worst_mixed = worst_mixed.max(residual_star1(&h, &ti) / bound);
    }

    let passed = worst_uniform <= 1e-8 && worst_mixed <= 1.0;
    CriterionResult {
        index: 8,
        name: "star_equivalence",
        passed,
        worst: worst_uniform.max(worst_mixed),
        threshold: 1.0,
        detail: format!(
            "uniform residuals {worst_uniform:.2e} (<= 1e-8), scaled mixed ratio {worst_mixed:.3}"
        ),
    }
}

/// Random expression trees that stay smooth and well-scaled on the sample
/// box, for the derivative cross-check.
fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..3) {
            0 => Expr::Const((rng.gen_range(-200..200) as f64) / 100.0),
            1 => Expr::Var(Var::Q(0)),
            _ => Expr::Var(Var::P(0)),
        };
    }
    let a = random_expr(rng, depth - 1);
    let b = random_expr(rng, depth - 1);
    match rng.gen_range(0..8) {
        0 => Expr::Add(Box::new(a), Box::new(b)),
        1 => Expr::Sub(Box::new(a), Box::new(b)),
        2 => Expr::Mul(Box::new(a), Box::new(b)),
        3 => Expr::Neg(Box::new(a)),
        4 => Expr::Call(crate::expr::Func::Sin, Box::new(a)),
        5 => Expr::Call(crate::expr::Func::Cos, Box::new(a)),
        6 => Expr::Mul(
            Box::new(Expr::Const(0.3)),
            Box::new(Expr::Call(crate::expr::Func::Exp, Box::new(Expr::Mul(
                Box::new(Expr::Const(0.4)),
                Box::new(a),
            )))),
        ),
        _ => Expr::Div(
            Box::new(a),
            Box::new(Expr::Add(
                Box::new(Expr::Const(2.0)),
                Box::new(Expr::Pow(Box::new(b), Box::new(Expr::Const(2.0)))),
            )),
        ),
    }
}

/// Criterion 9: parser and differentiator cross-checks.
pub fn criterion_parser_differentiator(seed: u64) -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
    let mut worst_rel: f64 = 0.0;
    let mut idempotent = true;
    for _ in 0..200 {
        let tree = random_expr(&mut rng, 4);

        // Print / parse round trip.
        let printed = tree.to_string();
        let reparsed = parse_expr(&printed, VarSet::Phase { dim: 1 }).unwrap();
        if reparsed.to_string() != printed {
            idempotent = false;
        }

        // Analytic vs central-difference derivative.
        for var in [Var::Q(0), Var::P(0)] {
            let d = tree.differentiate(var);
            for _ in 0..4 {
                let q = rng.gen_range(-1.0..1.0);
                let p = rng.gen_range(-1.0..1.0);
                let h = 1e-6;
                let eval = |q: f64, p: f64| tree.eval(&EvalCtx::phase(&[q], &[p]));
                let (fp, fm) = match var {
                    Var::Q(_) => (eval(q + h, p), eval(q - h, p)),
                    _ => (eval(q, p + h), eval(q, p - h)),
                };
                let fd = (fp - fm) / (2.0 * h);
                let an = d.eval(&EvalCtx::phase(&[q], &[p]));
                if !fd.is_finite() || !an.is_finite() {
                    continue;
                }
                let rel = (fd - an).abs() / an.abs().max(1.0);
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    let passed = worst_rel <= 1e-7 && idempotent;
    CriterionResult {
        index: 9,
        name: "parser_differentiator",
        passed,
        worst: worst_rel,
        threshold: 1e-7,
        detail: format!(
            "200 trees; derivative relative error {worst_rel:.2e}, print/parse idempotent: {idempotent}"
        ),
    }
}

/// Runs criteria 1 through 9 (criterion 10, byte-identical self-test
/// artifacts, is exercised end to end through the CLI).
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    vec![
        criterion_operator_identities(seed),
        criterion_integration_by_parts(seed),
        criterion_helmholtz_catalog(seed),
        criterion_reconstruction_roundtrip(seed),
        criterion_variational_agreement(seed),
        criterion_solver_reductions(seed),
        criterion_critical_point(seed),
        criterion_star_equivalence(seed),
        criterion_parser_differentiator(seed),
    ]
}
