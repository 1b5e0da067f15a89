//! Calculus, Hamiltonian dynamics and the Helmholtz inverse problem on
//! bounded time scales.
//!
//! A time scale is a bounded closed subset of the reals, modeled here as an
//! ordered union of disjoint closed intervals. The crate provides:
//!
//! * exact structural operators (jump functions, graininess, point
//!   classification) in [`timescale`],
//! * delta/nabla differentiation and delta integration of grid functions in
//!   [`calculus`],
//! * the symplectic L2 pairing, action functional and the linearized
//!   equation operator with its adjoint in [`variational`],
//! * the Helmholtz conditions deciding whether a first-order field admits a
//!   Hamiltonian formulation, and the reconstruction integral, in
//!   [`helmholtz`],
//! * solvers for the Hamilton equations in derivative and integral form,
//!   with residual diagnostics and the classical-equation embeddings, in
//!   [`dynamics`],
//! * an expression parser with exact tree differentiation in [`expr`].
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (implemented for `f32` and `f64`); the aliases below fix the common
//! `f64` instantiation. Default tolerances are tuned for `f64`.
//!
//! ```
//! use std::sync::Arc;
//! use tshelm::dynamics::{solve_derivative_form, SolverConfig};
//! use tshelm::hamiltonian::Hamiltonian;
//! use tshelm::helmholtz::{check_conditions, reconstruct, CheckOptions, Verdict, VectorField};
//! use tshelm::timescale::parse_literal;
//!
//! // A pendulum field on a scale mixing an interval with isolated points.
//! let scale = Arc::new(parse_literal("union: [0, 1]; 1.25 1.5; dense_step: 0.001")?);
//! let field: Arc<VectorField<f64>> =
//!     Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"])?);
//!
//! let report = check_conditions(field.as_ref(), -1.0, 1.0, CheckOptions::default())?;
//! assert_eq!(report.verdict, Verdict::Hamiltonian);
//!
//! let h = reconstruct(field, 32);
//! assert!((h.eval(&[0.5], &[0.2]) - (0.02 + 1.0 - 0.5f64.cos())).abs() < 1e-12);
//!
//! let traj = solve_derivative_form(&h, scale, &[0.5], &[0.2], &SolverConfig::default())?;
//! assert!(traj.q(traj.len() - 1)[0].is_finite());
//! # Ok::<(), tshelm::Error<f64>>(())
//! ```

// Strided index loops over parallel arrays read better than iterator
// chains in the numerical kernels.
#![allow(clippy::needless_range_loop)]

pub mod calculus;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod hamiltonian;
pub mod helmholtz;
pub mod linalg;
pub mod quad;
pub mod scalar;
pub mod selftest;
pub mod timescale;
pub mod variational;

pub use error::Error;
pub use scalar::Real;

/// `f64` instantiations of the main types.
pub type TimeScale64 = timescale::TimeScale<f64>;
pub type GridFunction64 = calculus::GridFunction<f64>;
pub type SmoothGridFunction64 = calculus::SmoothGridFunction<f64>;
pub type VectorField64 = helmholtz::VectorField<f64>;
pub type HelmholtzReport64 = helmholtz::HelmholtzReport<f64>;
pub type ReconstructedHamiltonian64 = helmholtz::ReconstructedHamiltonian<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type SolverConfig64 = dynamics::SolverConfig<f64>;
pub type PhasePath64 = variational::PhasePath<f64>;
pub type Variation64 = variational::Variation<f64>;

/// `f32` instantiations for callers that trade precision for footprint;
/// the crate's default tolerances assume `f64`, so override them.
pub type TimeScale32 = timescale::TimeScale<f32>;
pub type GridFunction32 = calculus::GridFunction<f32>;
pub type VectorField32 = helmholtz::VectorField<f32>;
pub type Trajectory32 = dynamics::Trajectory<f32>;
