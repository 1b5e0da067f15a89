//! Property tests for the structural invariants: jump-operator monotonicity
//! and round trips, integral linearity and additivity, pairing symmetries,
//! adjoint consistency, and the Dubois-Reymond witnesses.

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tshelm::calculus::{
    antiderivative, delta_integral, delta_integral_limited, DenseLimits, GridFunction,
};
use tshelm::timescale::{Density, TimeScale};
use tshelm::variational::{
    adjoint_pairing_residual, l2_delta, l2_delta_symplectic, random_variation, PhasePath,
};
use tshelm::helmholtz::VectorField;

/// Strategy: a valid mixed scale described by segment lengths and gaps.
fn scale_strategy() -> impl Strategy<Value = Arc<TimeScale<f64>>> {
    (
        -1.0f64..1.0,
        prop::collection::vec((0.05f64..0.4, 0.05f64..0.5, prop::bool::ANY), 2..12),
    )
        .prop_map(|(start, parts)| {
            let mut segments = Vec::new();
            let mut t = start;
            for (len, gap, is_interval) in parts {
                if is_interval {
                    segments.push((t, t + len));
                    t += len;
                } else {
                    segments.push((t, t));
                }
                t += gap;
            }
            segments.push((t, t));
            Arc::new(TimeScale::new(segments, Some(2e-3)).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jump_operators_are_monotone_and_ordered(scale in scale_strategy()) {
        let grid = scale.grid();
        let mut prev_sigma = f64::NEG_INFINITY;
        let mut prev_rho = f64::NEG_INFINITY;
        for i in 0..grid.len() {
            let t = grid.point(i);
            let s = scale.sigma(t).unwrap();
            let r = scale.rho(t).unwrap();
            prop_assert!(s >= t && t >= r);
            prop_assert!(s >= prev_sigma && r >= prev_rho);
            prev_sigma = s;
            prev_rho = r;
        }
    }

    #[test]
    fn jump_round_trip_off_junctions(scale in scale_strategy()) {
        let grid = scale.grid();
        for i in 0..grid.len() {
            if !scale.in_core_domain_idx(i) || scale.is_junction_idx(i) {
                continue;
            }
            let t = grid.point(i);
            let s = scale.sigma(scale.rho(t).unwrap()).unwrap();
            let r = scale.rho(scale.sigma(t).unwrap()).unwrap();
            prop_assert_eq!(s, t);
            prop_assert_eq!(r, t);
        }
    }

    #[test]
    fn graininess_characterizes_scattering(scale in scale_strategy()) {
        let grid = scale.grid();
        for i in 0..grid.len() {
            let t = grid.point(i);
            let mu = scale.mu(t).unwrap();
            let class = scale.classify(t).unwrap();
            if t != scale.b() {
                prop_assert_eq!(mu > 0.0, class.right == Density::Scattered);
            } else {
                prop_assert_eq!(mu, 0.0);
            }
        }
    }

    #[test]
    fn membership_round_trip(scale in scale_strategy()) {
        let grid = scale.grid();
        for i in 0..grid.len() {
            prop_assert!(scale.contains(grid.point(i)));
        }
        // Midpoints of gaps are rejected.
        for w in scale.segments().windows(2) {
            let mid = 0.5 * (w[0].hi + w[1].lo);
            prop_assert!(!scale.contains(mid));
        }
    }

    #[test]
    fn integral_is_additive_over_adjacent_ranges(
        scale in scale_strategy(),
        split in 0.2f64..0.8,
    ) {
        let f = GridFunction::sample_scalar(scale.clone(), |t| (1.3 * t).sin() + 0.4 * t);
        let grid = scale.grid();
        let mid_idx = ((grid.len() - 1) as f64 * split) as usize;
        let (a, b) = (scale.a(), scale.b());
        let m = grid.point(mid_idx);
        let whole = delta_integral(&f, a, b).unwrap()[0];
        let left = delta_integral(&f, a, m).unwrap()[0];
        let right = delta_integral(&f, m, b).unwrap()[0];
        let tol = 1e-12 * whole.abs().max(1.0);
        prop_assert!((whole - (left + right)).abs() <= tol);
    }

    #[test]
    fn antiderivative_vanishes_at_a_and_matches_integral(scale in scale_strategy()) {
        let f = GridFunction::sample_scalar(scale.clone(), |t| (0.9 * t).cos());
        let u = antiderivative(&f);
        prop_assert_eq!(u.values.value(0)[0], 0.0);
        let grid = scale.grid();
        for i in (0..grid.len()).step_by(11) {
            let direct = delta_integral(&f, scale.a(), grid.point(i)).unwrap()[0];
            prop_assert!((u.values.value(i)[0] - direct).abs() <= 1e-13);
        }
    }

    #[test]
    fn symplectic_pairing_is_antisymmetric_and_bilinear(
        scale in scale_strategy(),
        seed in 0u64..1000,
        alpha in -2.0f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_variation(&scale, 1, &mut rng);
        let g = random_variation(&scale, 1, &mut rng);
        let h = random_variation(&scale, 1, &mut rng);
        let stack = |v: &tshelm::variational::Variation<f64>| -> GridFunction<f64> {
            let n = v.u.values.len();
            let mut vals = Vec::with_capacity(2 * n);
            for i in 0..n {
                vals.push(v.u.values.value(i)[0]);
                vals.push(v.v.values.value(i)[0]);
            }
            GridFunction::from_values(scale.clone(), 2, vals).unwrap()
        };
        let (fs, gs, hs) = (stack(&f), stack(&g), stack(&h));
        let fg = l2_delta_symplectic(&fs, &gs).unwrap();
        let gf = l2_delta_symplectic(&gs, &fs).unwrap();
        prop_assert!((fg + gf).abs() <= 1e-12 * fg.abs().max(1.0));

        let combo = gs.add_scaled(&hs, alpha).unwrap();
        let lhs = l2_delta_symplectic(&fs, &combo).unwrap();
        let rhs = fg + alpha * l2_delta_symplectic(&fs, &hs).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

        let dlhs = l2_delta(&fs, &combo).unwrap();
        let drhs = l2_delta(&fs, &gs).unwrap() + alpha * l2_delta(&fs, &hs).unwrap();
        prop_assert!((dlhs - drhs).abs() <= 1e-12 * dlhs.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The adjoint pairing identity holds for every field, Hamiltonian or
    /// not, as long as rho^delta exists on the range.
    #[test]
    fn adjoint_pairing_identity(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Leading dense segment plus scattered tail: no rho-side junction.
        let scale = Arc::new(TimeScale::new(
            vec![(0.0, 0.45), (0.6, 0.6), (0.75, 0.75), (0.9, 0.9), (1.0, 1.0)],
            Some(1e-3),
        ).unwrap());
        let path = PhasePath::from_closures(
            scale.clone(),
            1,
            |t: f64| vec![(0.7 * t).cos()],
            |t: f64| vec![(0.5 * t).sin() - 0.1],
            |t: f64| vec![-0.7 * (0.7 * t).sin()],
        );
        let fields: Vec<VectorField<f64>> = vec![
            VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap(),
            VectorField::parse(1, &["p1"], &["-q1 - 0.1*p1"]).unwrap(),
            VectorField::parse(1, &["p1 + 0.5*q1"], &["-q1 + 0.5*p1"]).unwrap(),
        ];
        let f = random_variation(&scale, 1, &mut rng);
        let g = random_variation(&scale, 1, &mut rng);
        for field in &fields {
            let r = adjoint_pairing_residual(field, &path, &f, &g).unwrap();
            let bound = 1e-9f64.max(10.0 * scale.dense_step().powi(2));
            prop_assert!(r <= bound, "residual {} above {}", r, bound);
        }
    }
}

/// Strong Dubois-Reymond witness: for constant q the pairing with any
/// boundary-vanishing variation derivative vanishes; for non-constant q a
/// constructed variation exposes it.
#[test]
fn dubois_reymond_strong_form() {
    let scales = vec![
        Arc::new(TimeScale::uniform(0.0, 1.0, 12).unwrap()),
        Arc::new(
            TimeScale::new(vec![(0.0, 0.5), (0.65, 0.65), (0.8, 0.8), (1.0, 1.0)], Some(1e-3))
                .unwrap(),
        ),
    ];
    for scale in &scales {
        let q = GridFunction::constant(scale.clone(), &[0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let w = random_variation(scale, 1, &mut rng);
            // integrand q . w^Delta, with the rd-limit at dense run ends.
            let mut limits = DenseLimits::new();
            for idx in w.u.delta_limits.indices() {
                let lim = w.u.delta_limits.get(idx).unwrap();
                limits.insert(idx, vec![0.8 * lim[0]]);
            }
            let integrand = q.pointwise_dot(&w.u.delta).unwrap();
            let val: f64 =
                delta_integral_limited(&integrand, Some(&limits), scale.a(), scale.b()).unwrap()[0];
            assert!(val.abs() <= 1e-10, "constant q gave {val}");
        }
    }

    // Converse on a scattered scale: w built from the antiderivative of
    // q minus its mean makes the pairing strictly positive.
    let scale = Arc::new(TimeScale::uniform(0.0, 1.0, 10).unwrap());
    let q = GridFunction::sample_scalar(scale.clone(), |t| t);
    let total = delta_integral(&q, 0.0, 1.0).unwrap()[0];
    let mean = total / (scale.b() - scale.a());
    let centered = q.add_scaled(&GridFunction::constant(scale.clone(), &[1.0]), 0.0).unwrap();
    let shifted = centered
        .add_scaled(&GridFunction::constant(scale.clone(), &[mean]), -1.0)
        .unwrap();
    let w = antiderivative(&shifted);
    // w(a) = 0 by construction and w(b) = integral of (q - mean) = 0.
    let last = w.values.len() - 1;
    let end_value: f64 = w.values.value(last)[0];
    assert!(end_value.abs() <= 1e-14);
    // Pairing: sum mu q w^Delta with w^Delta = q - mean exactly at
    // scattered points.
    let integrand = q.pointwise_dot(&shifted).unwrap();
    let val = delta_integral(&integrand, 0.0, 1.0).unwrap()[0];
    assert!(val > 0.01, "witness pairing too small: {val}");
}

/// Weak Dubois-Reymond witness: w = (t-a)^2 (b-t)^2 q makes the pairing a
/// nonnegative quadratic form vanishing only with q.
#[test]
fn dubois_reymond_weak_form() {
    let scale = Arc::new(
        TimeScale::new(vec![(0.0, 0.4), (0.55, 0.55), (0.7, 0.7), (1.0, 1.0)], Some(1e-3))
            .unwrap(),
    );
    let (a, b) = (scale.a(), scale.b());
    let r = move |t: f64| (t - a).powi(2) * (b - t).powi(2);

    let q = GridFunction::sample_scalar(scale.clone(), |t| (2.0 * t).sin() - 0.3);
    let w = GridFunction::sample_scalar(scale.clone(), move |t| r(t) * ((2.0 * t).sin() - 0.3));
    let integrand = q.pointwise_dot(&w).unwrap();
    let val: f64 = delta_integral(&integrand, a, b).unwrap()[0];
    assert!(val > 0.0);

    let zero = GridFunction::constant(scale.clone(), &[0.0]);
    let wz = zero.pointwise_dot(&zero).unwrap();
    assert_eq!(delta_integral(&wz, a, b).unwrap()[0], 0.0);

    // Pairing against the witness bounds the interior values of q: a small
    // integral forces small q away from the endpoints.
    let grid = scale.grid();
    let mut lower = 0.0;
    for i in 0..grid.len() - 1 {
        if scale.class_idx(i).is_right_scattered() {
            let t = grid.point(i);
            lower += scale.mu_idx(i) * r(t) * q.value(i)[0].powi(2);
        }
    }
    assert!(val >= lower - 1e-12);
}

/// Reports must not depend on the time scale: the conditions are pointwise
/// in phase space.
#[test]
fn helmholtz_report_is_scale_independent() {
    use tshelm::helmholtz::{catalog, check_conditions, CheckOptions};
    for entry in catalog::<f64>() {
        let r1 = check_conditions(entry.field.as_ref(), -1.0, 1.0, CheckOptions::default()).unwrap();
        let r2 = check_conditions(entry.field.as_ref(), -1.0, 1.0, CheckOptions::default()).unwrap();
        let s1 = serde_json::to_string(&r1).unwrap();
        let s2 = serde_json::to_string(&r2).unwrap();
        assert_eq!(s1, s2, "report differs between runs for {}", entry.name);
    }
}

/// Helmholtz equivalence: the pointwise verdict agrees with thresholding
/// the variational self-adjointness residual on a mixed scale.
#[test]
fn verdict_agrees_with_selfadjointness_threshold() {
    use tshelm::helmholtz::{catalog, check_conditions, CheckOptions, Verdict};
    use tshelm::variational::selfadjointness_residual;
    let scale = Arc::new(
        TimeScale::new(
            vec![(0.0, 0.5), (0.6, 0.6), (0.7, 0.7), (0.8, 0.8), (0.9, 0.9), (1.0, 1.0)],
            Some(1e-3),
        )
        .unwrap(),
    );
    for entry in catalog::<f64>() {
        let d = entry.field.dim();
        let path = PhasePath::from_closures(
            scale.clone(),
            d,
            move |t: f64| (0..d).map(|k| (0.4 * t + k as f64).cos()).collect(),
            move |t: f64| (0..d).map(|k| (0.3 * t - k as f64).sin()).collect(),
            move |t: f64| (0..d).map(|k| -0.4 * (0.4 * t + k as f64).sin()).collect(),
        );
        let residual = selfadjointness_residual(entry.field.as_ref(), &path, 12, 3).unwrap();
        let report =
            check_conditions(entry.field.as_ref(), -1.0, 1.0, CheckOptions::default()).unwrap();
        let verdict_h = report.verdict == Verdict::Hamiltonian;
        let residual_h = residual <= 1e-6;
        assert_eq!(verdict_h, residual_h, "{}: residual {residual}", entry.name);
    }
}
