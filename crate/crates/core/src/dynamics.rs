//! Hamilton equations on a time scale, in derivative and integral form,
//! plus the generic first-order embeddings.
//!
//! The derivative-form stepper is explicit in `q` and implicit in `p`:
//! across a gap from `t_k` to `t_{k+1}` it enforces
//! `q(t_{k+1}) = q(t_k) + mu(t_k) H_p(q_k, p_k)` and solves
//! `p(t_{k+1}) + gap * H_q(q_{k+1}, p_{k+1}) = p(t_k)` by Newton, where
//! `gap` is `mu(t_{k+1})` at interior points and `nu(b)` for the closing
//! step (the equations leave `p(b)` free; the closing update extends the
//! scheme continuously). Dense segments integrate the classical equations
//! with a fourth-order one-step method on the sample grid.

use std::sync::Arc;

use crate::calculus::{prefix_integrals, GridFunction};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::linalg::solve_in_place;
use crate::scalar::{max_abs, Real};
use crate::timescale::TimeScale;
use crate::variational::PhasePath;

/// How one grid point was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Initial,
    Dense,
    Scattered,
    /// Arrival at a scattered-to-dense junction: the momentum equation does
    /// not exist there, the state is carried across by continuity.
    JunctionSkipped,
}

impl StepKind {
    pub fn label(&self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Dense => "dense",
            StepKind::Scattered => "scattered",
            StepKind::JunctionSkipped => "junction-skipped",
        }
    }
}

/// Per-point solver diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<R> {
    pub kind: StepKind,
    pub newton_iters: usize,
    pub residual: R,
}

/// Time-indexed solution samples with diagnostics.
pub struct Trajectory<R: Real> {
    scale: Arc<TimeScale<R>>,
    dim: usize,
    q: Vec<R>,
    p: Vec<R>,
    steps: Vec<StepInfo<R>>,
    /// Integral-form constants consistent with this trajectory.
    pub c_q: Vec<R>,
    pub c_p: Vec<R>,
}

impl<R: Real> Trajectory<R> {
    pub fn scale(&self) -> &Arc<TimeScale<R>> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.scale.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> R {
        self.scale.grid().point(i)
    }

    pub fn q(&self, i: usize) -> &[R] {
        &self.q[i * self.dim..(i + 1) * self.dim]
    }

    pub fn p(&self, i: usize) -> &[R] {
        &self.p[i * self.dim..(i + 1) * self.dim]
    }

    pub fn step(&self, i: usize) -> &StepInfo<R> {
        &self.steps[i]
    }

    pub fn q_grid(&self) -> GridFunction<R> {
        GridFunction::from_values(self.scale.clone(), self.dim, self.q.clone()).expect("sized")
    }

    pub fn p_grid(&self) -> GridFunction<R> {
        GridFunction::from_values(self.scale.clone(), self.dim, self.p.clone()).expect("sized")
    }

    /// View as a phase path; the `q` derivative field is rebuilt from the
    /// stored values.
    pub fn as_phase_path(&self) -> PhasePath<R> {
        PhasePath::from_values(self.q_grid(), self.p_grid()).expect("shared grid")
    }
}

/// Solver parameters. Defaults suit `f64`.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<R> {
    pub newton_tol: R,
    pub newton_max_iter: usize,
    pub picard_max_sweeps: usize,
}

impl<R: Real> Default for SolverConfig<R> {
    fn default() -> Self {
        SolverConfig {
            newton_tol: R::of(1e-12),
            newton_max_iter: 50,
            picard_max_sweeps: 200,
        }
    }
}

/// Newton solve of `x + gap * H_q(q, x) = target`, started from `target`.
/// Falls back to a damped fixed point when the Jacobian is singular.
fn solve_implicit_p<R: Real>(
    h: &dyn Hamiltonian<R>,
    t: R,
    gap: R,
    q: &[R],
    target: &[R],
    cfg: &SolverConfig<R>,
) -> Result<(Vec<R>, usize, R), R> {
    let d = q.len();
    let mut x = target.to_vec();
    let mut residual = R::infinity();
    for iter in 0..cfg.newton_max_iter {
        let hq = h.grad_q(q, &x);
        let mut g = vec![R::zero(); d];
        for k in 0..d {
            g[k] = x[k] + gap * hq[k] - target[k];
        }
        residual = max_abs(&g);
        if !residual.is_finite() {
            return Err(Error::NewtonDiverged { t, iters: iter, residual });
        }
        if residual <= cfg.newton_tol {
            return Ok((x, iter, residual));
        }
        let mut jac = h.grad_q_jac_p(q, &x);
        for v in jac.iter_mut() {
            *v *= gap;
        }
        for k in 0..d {
            jac[k * d + k] += R::one();
        }
        let mut delta = g.clone();
        if solve_in_place(&mut jac, &mut delta, d) {
            for k in 0..d {
                x[k] -= delta[k];
            }
        } else {
            // Damped fixed point on x = target - gap H_q(q, x).
            let half = R::of(0.5);
            for k in 0..d {
                x[k] -= half * g[k];
            }
        }
    }
    Err(Error::NewtonDiverged { t, iters: cfg.newton_max_iter, residual })
}

fn rk4_step<R: Real>(h: &dyn Hamiltonian<R>, q: &mut [R], p: &mut [R], dt: R) {
    let d = q.len();
    let eval = |q: &[R], p: &[R]| -> (Vec<R>, Vec<R>) {
        let dq = h.grad_p(q, p);
        let mut dp = h.grad_q(q, p);
        for v in &mut dp {
            *v = -*v;
        }
        (dq, dp)
    };
    let half = R::of(0.5);
    let sixth = dt / R::of(6.0);
    let two = R::of(2.0);
    let (k1q, k1p) = eval(q, p);
    let shift = |base: &[R], dir: &[R], s: R| -> Vec<R> {
        base.iter().zip(dir).map(|(&b, &d)| b + s * d).collect()
    };
    let (k2q, k2p) = eval(&shift(q, &k1q, half * dt), &shift(p, &k1p, half * dt));
    let (k3q, k3p) = eval(&shift(q, &k2q, half * dt), &shift(p, &k2p, half * dt));
    let (k4q, k4p) = eval(&shift(q, &k3q, dt), &shift(p, &k3p, dt));
    for k in 0..d {
        q[k] += sixth * (k1q[k] + two * k2q[k] + two * k3q[k] + k4q[k]);
        p[k] += sixth * (k1p[k] + two * k2p[k] + two * k3p[k] + k4p[k]);
    }
}

/// Solves the derivative-form Hamilton equations from `(q0, p0)`.
///
/// Junction points are reported in the scale's admissibility report; the
/// solve proceeds piecewise across them, carrying the state continuously
/// and marking the affected arrivals.
pub fn solve_derivative_form<R: Real>(
    h: &dyn Hamiltonian<R>,
    scale: Arc<TimeScale<R>>,
    q0: &[R],
    p0: &[R],
    cfg: &SolverConfig<R>,
) -> Result<Trajectory<R>, R> {
    let d = h.dim();
    if q0.len() != d || p0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q0.len().min(p0.len()) });
    }
    let grid = scale.grid();
    let n = grid.len();
    let mut q = vec![R::zero(); n * d];
    let mut p = vec![R::zero(); n * d];
    let mut steps = vec![
        StepInfo { kind: StepKind::Initial, newton_iters: 0, residual: R::zero() };
        n
    ];
    q[0..d].copy_from_slice(q0);
    p[0..d].copy_from_slice(p0);

    let mut i = 0usize;
    while i + 1 < n {
        if scale.class_idx(i).is_right_scattered() {
            let mu = scale.mu_idx(i);
            let t_next = grid.point(i + 1);
            let (qi, pi) = (q[i * d..(i + 1) * d].to_vec(), p[i * d..(i + 1) * d].to_vec());
            let hp = h.grad_p(&qi, &pi);
            let mut q_next = vec![R::zero(); d];
            for k in 0..d {
                q_next[k] = qi[k] + mu * hp[k];
            }
            q[(i + 1) * d..(i + 2) * d].copy_from_slice(&q_next);

            // A left-scattered b classifies as (RD, LS) by convention; the
            // closing update applies there, not the junction skip.
            let arrival = scale.class_idx(i + 1);
            if i + 1 < n - 1 && arrival.is_rho_junction() {
                // No momentum equation at a scattered-to-dense junction.
                p[(i + 1) * d..(i + 2) * d].copy_from_slice(&pi);
                steps[i + 1] =
                    StepInfo { kind: StepKind::JunctionSkipped, newton_iters: 0, residual: R::zero() };
            } else {
                let gap = if i + 1 == n - 1 {
                    scale.nu_idx(i + 1)
                } else {
                    scale.mu_idx(i + 1)
                };
                let (p_next, iters, residual) =
                    solve_implicit_p(h, t_next, gap, &q_next, &pi, cfg)?;
                p[(i + 1) * d..(i + 2) * d].copy_from_slice(&p_next);
                steps[i + 1] =
                    StepInfo { kind: StepKind::Scattered, newton_iters: iters, residual };
            }
            i += 1;
        } else {
            let seg = grid.segment_of(i);
            let (_, hi) = grid.segment_range(seg);
            let dt = grid.segment_spacing(seg);
            let mut qi = q[i * d..(i + 1) * d].to_vec();
            let mut pi = p[i * d..(i + 1) * d].to_vec();
            for j in i..hi {
                rk4_step(h, &mut qi, &mut pi, dt);
                q[(j + 1) * d..(j + 2) * d].copy_from_slice(&qi);
                p[(j + 1) * d..(j + 2) * d].copy_from_slice(&pi);
                steps[j + 1] = StepInfo { kind: StepKind::Dense, newton_iters: 0, residual: R::zero() };
            }
            i = hi;
        }
    }

    if !q.iter().chain(p.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "trajectory state" });
    }

    // Integral-form constants matching this trajectory: C_q = q(a) and
    // C_p = p(a) + mu(a) H_q(q(a), p(a)).
    let c_q = q0.to_vec();
    let mu0 = scale.mu_idx(0);
    let hq0 = h.grad_q(q0, p0);
    let c_p: Vec<R> = (0..d).map(|k| p0[k] + mu0 * hq0[k]).collect();

    Ok(Trajectory { scale, dim: d, q, p, steps, c_q, c_p })
}

/// Solves the integral-form Hamilton equations for given constants
/// `(C_q, C_p)` by Picard sweeps over the grid, initialized from the
/// derivative-form solution when that solve succeeds.
pub fn solve_integral_form<R: Real>(
    h: &dyn Hamiltonian<R>,
    scale: Arc<TimeScale<R>>,
    c_q: &[R],
    c_p: &[R],
    cfg: &SolverConfig<R>,
) -> Result<Trajectory<R>, R> {
    let d = h.dim();
    if c_q.len() != d || c_p.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c_q.len().min(c_p.len()) });
    }
    let grid = scale.grid();
    let n = grid.len();

    // p(a) solves p + mu(a) H_q(C_q, p) = C_p.
    let mu0 = scale.mu_idx(0);
    let p0 = if mu0 == R::zero() {
        c_p.to_vec()
    } else {
        solve_implicit_p(h, scale.a(), mu0, c_q, c_p, cfg)?.0
    };

    let (mut q, mut p) = match solve_derivative_form(h, scale.clone(), c_q, &p0, cfg) {
        Ok(traj) => (traj.q, traj.p),
        Err(_) => {
            let mut q = vec![R::zero(); n * d];
            let mut p = vec![R::zero(); n * d];
            for i in 0..n {
                q[i * d..(i + 1) * d].copy_from_slice(c_q);
                p[i * d..(i + 1) * d].copy_from_slice(&p0);
            }
            (q, p)
        }
    };

    let mut delta = R::infinity();
    let mut sweeps = 0usize;
    while sweeps < cfg.picard_max_sweeps {
        sweeps += 1;
        let q_grid = GridFunction::from_values(scale.clone(), d, q.clone())?;
        let p_grid = GridFunction::from_values(scale.clone(), d, p.clone())?;
        let mut hp_vals = vec![R::zero(); n * d];
        let mut hq_vals = vec![R::zero(); n * d];
        for i in 0..n {
            let hp = h.grad_p(q_grid.value(i), p_grid.value(i));
            let hq = h.grad_q(q_grid.value(i), p_grid.value(i));
            hp_vals[i * d..(i + 1) * d].copy_from_slice(&hp);
            hq_vals[i * d..(i + 1) * d].copy_from_slice(&hq);
        }
        let prefix_hp = prefix_integrals(&GridFunction::from_values(scale.clone(), d, hp_vals)?);
        let prefix_hq = prefix_integrals(&GridFunction::from_values(scale.clone(), d, hq_vals)?);

        delta = R::zero();
        for i in 0..n {
            let up = prefix_hp.value(i);
            for k in 0..d {
                let new = c_q[k] + up[k];
                delta = delta.max((new - q[i * d + k]).abs());
                q[i * d + k] = new;
            }
            let uq = prefix_hq.value(scale.sigma_idx(i));
            for k in 0..d {
                let new = c_p[k] - uq[k];
                delta = delta.max((new - p[i * d + k]).abs());
                p[i * d + k] = new;
            }
        }
        if delta <= cfg.newton_tol {
            break;
        }
    }
    if delta > cfg.newton_tol {
        return Err(Error::PicardDiverged { sweeps, delta });
    }

    // The equations leave p(b) free at a left-scattered end; apply the same
    // closing update as the derivative-form stepper so the two solvers
    // agree pointwise.
    if n >= 2 && scale.class_idx(n - 1).is_left_scattered() {
        let nu = scale.nu_idx(n - 1);
        let q_end = q[(n - 1) * d..n * d].to_vec();
        let p_prev = p[(n - 2) * d..(n - 1) * d].to_vec();
        let (p_end, _, _) = solve_implicit_p(h, scale.b(), nu, &q_end, &p_prev, cfg)?;
        p[(n - 1) * d..n * d].copy_from_slice(&p_end);
    }

    if !q.iter().chain(p.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "trajectory state" });
    }

    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if i == 0 {
            StepKind::Initial
        } else if scale.is_junction_idx(i) && scale.class_idx(i).is_rho_junction() {
            StepKind::JunctionSkipped
        } else if scale.class_idx(i - 1).is_right_scattered() {
            StepKind::Scattered
        } else {
            StepKind::Dense
        };
        steps.push(StepInfo { kind, newton_iters: sweeps, residual: delta });
    }

    Ok(Trajectory { scale, dim: d, q, p, steps, c_q: c_q.to_vec(), c_p: c_p.to_vec() })
}

/// Fourth-order derivative estimate inside a dense run, used by the
/// residual evaluators (the trajectories themselves are fourth-order
/// accurate, so second-order stencils would mask the signal).
fn dense_stencil4<R: Real>(vals: &[R], dim: usize, k: usize, i: usize, lo: usize, hi: usize, h: R) -> R {
    let v = |j: usize| vals[j * dim + k];
    let c12 = R::of(12.0) * h;
    let left = i - lo;
    let right = hi - i;
    if left >= 2 && right >= 2 {
        return (v(i - 2) - R::of(8.0) * v(i - 1) + R::of(8.0) * v(i + 1) - v(i + 2)) / c12;
    }
    if hi - lo >= 4 {
        if left == 0 {
            return (-R::of(25.0) * v(i) + R::of(48.0) * v(i + 1) - R::of(36.0) * v(i + 2)
                + R::of(16.0) * v(i + 3)
                - R::of(3.0) * v(i + 4))
                / c12;
        }
        if left == 1 {
            return (-R::of(3.0) * v(i - 1) - R::of(10.0) * v(i) + R::of(18.0) * v(i + 1)
                - R::of(6.0) * v(i + 2)
                + v(i + 3))
                / c12;
        }
        if right == 1 {
            return (-v(i - 3) + R::of(6.0) * v(i - 2) - R::of(18.0) * v(i - 1)
                + R::of(10.0) * v(i)
                + R::of(3.0) * v(i + 1))
                / c12;
        }
        return (R::of(3.0) * v(i - 4) - R::of(16.0) * v(i - 3) + R::of(36.0) * v(i - 2)
            - R::of(48.0) * v(i - 1)
            + R::of(25.0) * v(i))
            / c12;
    }
    // Short run: second-order fallback.
    let two_h = R::of(2.0) * h;
    if left >= 1 && right >= 1 {
        (v(i + 1) - v(i - 1)) / two_h
    } else if right >= 2 {
        (-R::of(3.0) * v(i) + R::of(4.0) * v(i + 1) - v(i + 2)) / two_h
    } else {
        (R::of(3.0) * v(i) - R::of(4.0) * v(i - 1) + v(i - 2)) / two_h
    }
}

/// Maximum pointwise residual of the derivative-form equations over the
/// core domain, junction points skipped.
pub fn residual_star1<R: Real>(h: &dyn Hamiltonian<R>, traj: &Trajectory<R>) -> R {
    let scale = traj.scale();
    let grid = scale.grid();
    let n = grid.len();
    let d = traj.dim();
    let mut worst = R::zero();
    for i in 0..n {
        if !scale.in_core_domain_idx(i) || scale.is_junction_idx(i) {
            continue;
        }
        let qi = traj.q(i);
        let pi = traj.p(i);
        let hp = h.grad_p(qi, pi);
        let hq = h.grad_q(qi, pi);
        let class = scale.class_idx(i);
        if class.is_right_scattered() {
            // Doubly scattered: exact quotients.
            let mu = scale.mu_idx(i);
            for k in 0..d {
                let qd = (traj.q(i + 1)[k] - qi[k]) / mu;
                worst = worst.max((qd - hp[k]).abs());
                let pd = (pi[k] - traj.p(i - 1)[k]) / mu;
                worst = worst.max((pd + hq[k]).abs());
            }
        } else {
            let seg = grid.segment_of(i);
            let (lo, hi) = grid.segment_range(seg);
            let dt = grid.segment_spacing(seg);
            for k in 0..d {
                let qd = dense_stencil4(&traj.q, d, k, i, lo, hi, dt);
                worst = worst.max((qd - hp[k]).abs());
                let pd = dense_stencil4(&traj.p, d, k, i, lo, hi, dt);
                worst = worst.max((pd + hq[k]).abs());
            }
        }
    }
    worst
}

/// Maximum pointwise residual of the integral-form equations over
/// `T^kappa`, using the trajectory's recorded constants.
pub fn residual_star2<R: Real>(h: &dyn Hamiltonian<R>, traj: &Trajectory<R>) -> R {
    let scale = traj.scale();
    let n = scale.grid().len();
    let d = traj.dim();
    let mut hp_vals = vec![R::zero(); n * d];
    let mut hq_vals = vec![R::zero(); n * d];
    for i in 0..n {
        let hp = h.grad_p(traj.q(i), traj.p(i));
        let hq = h.grad_q(traj.q(i), traj.p(i));
        hp_vals[i * d..(i + 1) * d].copy_from_slice(&hp);
        hq_vals[i * d..(i + 1) * d].copy_from_slice(&hq);
    }
    let scale_arc = traj.scale().clone();
    let prefix_hp = prefix_integrals(
        &GridFunction::from_values(scale_arc.clone(), d, hp_vals).expect("sized"),
    );
    let prefix_hq = prefix_integrals(
        &GridFunction::from_values(scale_arc, d, hq_vals).expect("sized"),
    );
    let mut worst = R::zero();
    for i in 0..n {
        if !scale.in_delta_domain_idx(i) || scale.is_junction_idx(i) {
            continue;
        }
        let s = scale.sigma_idx(i);
        for k in 0..d {
            let q_res = traj.q(s)[k] - traj.c_q[k] - prefix_hp.value(s)[k];
            let p_res = traj.p(i)[k] - traj.c_p[k] + prefix_hq.value(s)[k];
            worst = worst.max(q_res.abs()).max(p_res.abs());
        }
    }
    worst
}

/// Energy samples `(t, H(q(t), p(t)))` along a trajectory. Purely
/// diagnostic: no conservation is asserted on scattered scales.
pub fn energy_series<R: Real>(h: &dyn Hamiltonian<R>, traj: &Trajectory<R>) -> Vec<(R, R)> {
    (0..traj.len())
        .map(|i| (traj.time(i), h.eval(traj.q(i), traj.p(i))))
        .collect()
}

type OdeRhs<R> = Arc<dyn Fn(R, &[R]) -> Vec<R> + Send + Sync>;

/// Delta embedding of `x' = f(t, x)`: the dynamic equation
/// `x^Delta(t) = f(t, x(t))` bound to a scale.
pub struct DynamicEquation<R: Real> {
    scale: Arc<TimeScale<R>>,
    dim: usize,
    rhs: OdeRhs<R>,
}

pub fn embed_ode<R: Real>(
    scale: Arc<TimeScale<R>>,
    dim: usize,
    rhs: impl Fn(R, &[R]) -> Vec<R> + Send + Sync + 'static,
) -> DynamicEquation<R> {
    DynamicEquation { scale, dim, rhs: Arc::new(rhs) }
}

impl<R: Real> DynamicEquation<R> {
    /// First-order delta stepper: exact explicit updates across gaps,
    /// fourth-order one-step integration on dense runs.
    pub fn solve(&self, x0: &[R]) -> Result<GridFunction<R>, R> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x0.len() });
        }
        let grid = self.scale.grid();
        let n = grid.len();
        let d = self.dim;
        let mut vals = vec![R::zero(); n * d];
        vals[0..d].copy_from_slice(x0);
        let mut i = 0usize;
        while i + 1 < n {
            if self.scale.class_idx(i).is_right_scattered() {
                let mu = self.scale.mu_idx(i);
                let t = grid.point(i);
                let xi = vals[i * d..(i + 1) * d].to_vec();
                let f = (self.rhs)(t, &xi);
                for k in 0..d {
                    vals[(i + 1) * d + k] = xi[k] + mu * f[k];
                }
                i += 1;
            } else {
                let seg = grid.segment_of(i);
                let (_, hi) = grid.segment_range(seg);
                let dt = grid.segment_spacing(seg);
                let mut x = vals[i * d..(i + 1) * d].to_vec();
                for j in i..hi {
                    let t = grid.point(j);
                    x = rk4_ode(&*self.rhs, t, &x, dt);
                    vals[(j + 1) * d..(j + 2) * d].copy_from_slice(&x);
                }
                i = hi;
            }
        }
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "dynamic equation state" });
        }
        GridFunction::from_values(self.scale.clone(), d, vals)
    }
}

fn rk4_ode<R: Real>(f: &(dyn Fn(R, &[R]) -> Vec<R> + Send + Sync), t: R, x: &[R], dt: R) -> Vec<R> {
    let d = x.len();
    let half = R::of(0.5);
    let two = R::of(2.0);
    let shift = |dir: &[R], s: R| -> Vec<R> { x.iter().zip(dir).map(|(&b, &v)| b + s * v).collect() };
    let k1 = f(t, x);
    let k2 = f(t + half * dt, &shift(&k1, half * dt));
    let k3 = f(t + half * dt, &shift(&k2, half * dt));
    let k4 = f(t + dt, &shift(&k3, dt));
    (0..d)
        .map(|k| x[k] + dt / R::of(6.0) * (k1[k] + two * k2[k] + two * k3[k] + k4[k]))
        .collect()
}

/// Delta embedding of the integral equation
/// `x(t) = x(a) + int_a^sigma(t) f(s, x(s)) Delta s`.
///
/// The value at `a` is pinned to the initial datum; at a right-scattered
/// start the equation itself would constrain `f(a, x(a))`, which the
/// embedding leaves to the caller.
pub struct IntegralEquation<R: Real> {
    scale: Arc<TimeScale<R>>,
    dim: usize,
    rhs: OdeRhs<R>,
}

pub fn embed_integral_equation<R: Real>(
    scale: Arc<TimeScale<R>>,
    dim: usize,
    rhs: impl Fn(R, &[R]) -> Vec<R> + Send + Sync + 'static,
) -> IntegralEquation<R> {
    IntegralEquation { scale, dim, rhs: Arc::new(rhs) }
}

impl<R: Real> IntegralEquation<R> {
    pub fn solve(&self, x0: &[R], cfg: &SolverConfig<R>) -> Result<GridFunction<R>, R> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x0.len() });
        }
        let grid = self.scale.grid();
        let n = grid.len();
        let d = self.dim;
        let mut vals = vec![R::zero(); n * d];
        for i in 0..n {
            vals[i * d..(i + 1) * d].copy_from_slice(x0);
        }
        let mut delta = R::infinity();
        let mut sweeps = 0usize;
        while sweeps < cfg.picard_max_sweeps {
            sweeps += 1;
            let mut f_vals = vec![R::zero(); n * d];
            for i in 0..n {
                let f = (self.rhs)(grid.point(i), &vals[i * d..(i + 1) * d]);
                f_vals[i * d..(i + 1) * d].copy_from_slice(&f);
            }
            let prefix = prefix_integrals(
                &GridFunction::from_values(self.scale.clone(), d, f_vals)?,
            );
            delta = R::zero();
            for i in 1..n {
                let up = prefix.value(self.scale.sigma_idx(i));
                for k in 0..d {
                    let new = x0[k] + up[k];
                    delta = delta.max((new - vals[i * d + k]).abs());
                    vals[i * d + k] = new;
                }
            }
            if delta <= cfg.newton_tol {
                break;
            }
        }
        if delta > cfg.newton_tol {
            return Err(Error::PicardDiverged { sweeps, delta });
        }
        GridFunction::from_values(self.scale.clone(), d, vals)
    }
}

type LagrangianFn<R> = Arc<dyn Fn(R, &[R], &[R]) -> R + Send + Sync>;

/// Delta embedding of an integral functional
/// `L_Delta(x) = int_a^sigma(t) L(s, x(s), x^Delta(s)) Delta s`.
pub struct FunctionalEmbedding<R: Real> {
    scale: Arc<TimeScale<R>>,
    lagrangian: LagrangianFn<R>,
}

pub fn embed_functional<R: Real>(
    scale: Arc<TimeScale<R>>,
    lagrangian: impl Fn(R, &[R], &[R]) -> R + Send + Sync + 'static,
) -> FunctionalEmbedding<R> {
    FunctionalEmbedding { scale, lagrangian: Arc::new(lagrangian) }
}

impl<R: Real> FunctionalEmbedding<R> {
    /// Evaluates the embedded functional up to `sigma(t)`; `None` means the
    /// full scale (`sigma(b) = b`).
    pub fn evaluate(
        &self,
        x: &crate::calculus::SmoothGridFunction<R>,
        upto: Option<R>,
    ) -> Result<R, R> {
        let grid = self.scale.grid();
        let n = grid.len();
        let t = upto.unwrap_or_else(|| self.scale.b());
        let upper = self.scale.sigma(t)?;
        let mut integrand = vec![R::zero(); n];
        for i in 0..n {
            let s = grid.point(i);
            let xd = x.delta.value(i);
            if xd[0].is_nan() {
                continue;
            }
            integrand[i] = (self.lagrangian)(s, x.values.value(i), xd);
        }
        let integrand = GridFunction::from_values(self.scale.clone(), 1, integrand)?;
        Ok(crate::calculus::delta_integral(&integrand, self.scale.a(), upper)?[0])
    }
}
