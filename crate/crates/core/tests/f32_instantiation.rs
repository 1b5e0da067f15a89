//! The numerics are generic over the scalar; this exercises the f32
//! instantiation end to end at tolerances matching single precision.

use std::sync::Arc;

use tshelm::calculus::{delta_integral, GridFunction};
use tshelm::dynamics::{solve_derivative_form, SolverConfig};
use tshelm::hamiltonian::ExprHamiltonian;
use tshelm::helmholtz::{check_conditions, reconstruct, CheckOptions, Verdict};
use tshelm::timescale::TimeScale;

#[test]
fn f32_calculus_and_solver() {
    let scale: Arc<TimeScale<f32>> =
        Arc::new(TimeScale::new(vec![(0.0, 1.0), (1.5, 1.5), (2.0, 2.0)], Some(1e-2)).unwrap());
    let f = GridFunction::sample_scalar(scale.clone(), |t: f32| t);
    let integral = delta_integral(&f, 0.0, 2.0).unwrap()[0];
    // 0.5 over the interval, then mu(1) f(1) = 0.5 and mu(1.5) f(1.5) = 0.75.
    assert!((integral - 1.75).abs() < 1e-4);

    let h = ExprHamiltonian::parse(1, "(q1^2 + p1^2)/2").unwrap();
    let cfg = SolverConfig::<f32> { newton_tol: 1e-5, ..Default::default() };
    let dense: Arc<TimeScale<f32>> = Arc::new(TimeScale::interval(0.0, 1.0, Some(1e-2)).unwrap());
    let traj = solve_derivative_form(&h, dense, &[1.0f32], &[0.0], &cfg).unwrap();
    let last = traj.len() - 1;
    assert!((traj.q(last)[0] - 1.0f32.cos()).abs() < 1e-3);
    assert!((traj.p(last)[0] + 1.0f32.sin()).abs() < 1e-3);
}

#[test]
fn f32_helmholtz() {
    let field: tshelm::VectorField32 =
        tshelm::helmholtz::VectorField::parse(1, &["p1"], &["-q1"]).unwrap();
    let r = check_conditions(
        &field,
        -1.0f32,
        1.0,
        CheckOptions { samples: 64, tol: Some(1e-4), seed: 1 },
    )
    .unwrap();
    assert_eq!(r.verdict, Verdict::Hamiltonian);

    let h = reconstruct(Arc::new(field), 16);
    use tshelm::hamiltonian::Hamiltonian;
    let v: f32 = h.eval(&[0.6f32], &[-0.8]);
    assert!((v - 0.5).abs() < 1e-5);
}
