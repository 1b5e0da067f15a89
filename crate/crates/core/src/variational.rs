//! Variational structures: scalar products, the action functional, its
//! Frechet derivative, and the linearized equation operator with its
//! adjoint under the symplectic pairing.
//!
//! The symplectic matrix `J = [[0, I], [-I, 0]]` is applied blockwise and
//! never materialized. Boundary-vanishing variations are generated as
//! degree-four random polynomials times `(t - a)(b - t)`, so their boundary
//! values are exactly zero and their classical derivatives are available in
//! closed form.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{
    delta_derivative_all, delta_integral, delta_integral_limited, DenseLimits, GridFunction,
    Quality, SmoothGridFunction,
};
use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::helmholtz::VectorField;
use crate::linalg::{matvec, matvec_t};
use crate::scalar::{dot, Real};
use crate::timescale::TimeScale;

/// Applies the canonical symplectic matrix `J = [[0, I], [-I, 0]]` to a
/// stacked phase vector `(u, v)` without materializing it: `J z = (v, -u)`.
pub fn apply_symplectic<R: Real>(z: &[R], out: &mut [R]) {
    let d = z.len() / 2;
    debug_assert_eq!(z.len(), 2 * d);
    for k in 0..d {
        out[k] = z[d + k];
        out[d + k] = -z[k];
    }
}

/// L2-Delta scalar product `int <f, g> Delta t` over the whole scale.
pub fn l2_delta<R: Real>(f: &GridFunction<R>, g: &GridFunction<R>) -> Result<R, R> {
    let integrand = f.pointwise_dot(g)?;
    let scale = f.scale();
    Ok(delta_integral(&integrand, scale.a(), scale.b())?[0])
}

pub fn l2_norm<R: Real>(f: &GridFunction<R>) -> Result<R, R> {
    Ok(l2_delta(f, f)?.max(R::zero()).sqrt())
}

/// Symplectic L2-Delta product `<f, J g>` for functions of dimension `2d`.
pub fn l2_delta_symplectic<R: Real>(f: &GridFunction<R>, g: &GridFunction<R>) -> Result<R, R> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: g.dim() });
    }
    if f.dim() % 2 != 0 {
        return Err(Error::OddDimension { dim: f.dim() });
    }
    let d = f.dim() / 2;
    let scale = f.scale().clone();
    let n = f.len();
    let mut integrand = vec![R::zero(); n];
    for i in 0..n {
        let fv = f.value(i);
        let gv = g.value(i);
        let mut acc = R::zero();
        for k in 0..d {
            acc += fv[k] * gv[d + k] - fv[d + k] * gv[k];
        }
        integrand[i] = acc;
    }
    let integrand = GridFunction::from_values(scale.clone(), 1, integrand)?;
    Ok(delta_integral(&integrand, scale.a(), scale.b())?[0])
}

/// Phase-space path `(q, p)` on a shared scale, with the delta derivative
/// of `q` cached for the action integrand.
pub struct PhasePath<R: Real> {
    pub q: GridFunction<R>,
    pub p: GridFunction<R>,
    pub q_delta: GridFunction<R>,
}

impl<R: Real> PhasePath<R> {
    /// Samples `q`, `p` from closures; `dq` supplies the classical
    /// derivative of `q` on dense segments.
    pub fn from_closures(
        scale: Arc<TimeScale<R>>,
        dim: usize,
        q: impl Fn(R) -> Vec<R>,
        p: impl Fn(R) -> Vec<R>,
        dq: impl Fn(R) -> Vec<R>,
    ) -> Self {
        let q = SmoothGridFunction::from_closures(scale.clone(), dim, q, dq);
        let p = GridFunction::sample(scale, dim, p);
        PhasePath { q: q.values, p, q_delta: q.delta }
    }

    /// Builds from plain grid values; the derivative field comes from
    /// finite differences.
    pub fn from_values(q: GridFunction<R>, p: GridFunction<R>) -> Result<Self, R> {
        if !q.same_grid(&p) {
            return Err(Error::GridMismatch);
        }
        if q.dim() != p.dim() {
            return Err(Error::DimensionMismatch { expected: q.dim(), got: p.dim() });
        }
        let q_delta = delta_derivative_all(&q).values;
        Ok(PhasePath { q, p, q_delta })
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn scale(&self) -> &Arc<TimeScale<R>> {
        self.q.scale()
    }
}

/// Boundary-vanishing variation pair `(u, v)`; each component carries its
/// exact delta and nabla derivative fields.
pub struct Variation<R: Real> {
    pub u: SmoothGridFunction<R>,
    pub v: SmoothGridFunction<R>,
}

impl<R: Real> Variation<R> {
    pub fn new(u: SmoothGridFunction<R>, v: SmoothGridFunction<R>) -> Result<Self, R> {
        let n = u.values.len();
        for f in [&u, &v] {
            for &val in f.values.value(0).iter().chain(f.values.value(n - 1)) {
                if val != R::zero() {
                    return Err(Error::InvalidArgument(
                        "variation must vanish exactly at both endpoints".into(),
                    ));
                }
            }
        }
        Ok(Variation { u, v })
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn scale(&self) -> &Arc<TimeScale<R>> {
        self.u.scale()
    }

    /// L2-Delta norm of the stacked pair.
    pub fn norm(&self) -> Result<R, R> {
        let uu = l2_delta(&self.u.values, &self.u.values)?;
        let vv = l2_delta(&self.v.values, &self.v.values)?;
        Ok((uu + vv).max(R::zero()).sqrt())
    }
}

/// One random smooth component: `(t - a)(b - t)` times a degree-four
/// polynomial in the normalized coordinate, with coefficients from `rng`.
fn random_component<R: Real>(
    scale: &Arc<TimeScale<R>>,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> SmoothGridFunction<R> {
    let a = scale.a();
    let b = scale.b();
    let width = b - a;
    let coeffs: Vec<Vec<R>> = (0..dim)
        .map(|_| (0..5).map(|_| R::of(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let tau = move |t: R| (R::of(2.0) * t - a - b) / width;
    let cf = coeffs.clone();
    let value = move |t: R| -> Vec<R> {
        let base = (t - a) * (b - t);
        let x = tau(t);
        cf.iter()
            .map(|c| {
                let mut poly = R::zero();
                for &ck in c.iter().rev() {
                    poly = poly * x + ck;
                }
                base * poly
            })
            .collect()
    };
    let derivative = move |t: R| -> Vec<R> {
        let base = (t - a) * (b - t);
        let dbase = a + b - R::of(2.0) * t;
        let x = tau(t);
        let dx = R::of(2.0) / width;
        coeffs
            .iter()
            .map(|c| {
                let mut poly = R::zero();
                let mut dpoly = R::zero();
                for &ck in c.iter().rev() {
                    dpoly = dpoly * x + poly;
                    poly = poly * x + ck;
                }
                dbase * poly + base * dpoly * dx
            })
            .collect()
    };
    SmoothGridFunction::from_closures(scale.clone(), dim, value, derivative)
}

/// Seeded random variation pair of dimension `dim`.
pub fn random_variation<R: Real>(
    scale: &Arc<TimeScale<R>>,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Variation<R> {
    let u = random_component(scale, dim, rng);
    let v = random_component(scale, dim, rng);
    Variation::new(u, v).expect("polynomial variations vanish at the endpoints")
}

fn require_admissible<R: Real>(scale: &TimeScale<R>) -> Result<(), R> {
    let junctions = scale.admissibility_report();
    if let Some(&first) = junctions.first() {
        return Err(Error::NotAdmissible { count: junctions.len(), first });
    }
    Ok(())
}

/// Hamiltonian action `int [ <p, q^Delta> - H(q, p) ] Delta t`.
pub fn action_functional<R: Real>(
    h: &dyn Hamiltonian<R>,
    path: &PhasePath<R>,
) -> Result<R, R> {
    let scale = path.scale().clone();
    require_admissible(scale.as_ref())?;
    let n = path.q.len();
    let mut integrand = vec![R::zero(); n];
    for i in 0..n {
        let q = path.q.value(i);
        let p = path.p.value(i);
        let qd = path.q_delta.value(i);
        let kinetic = if qd[0].is_nan() { R::zero() } else { dot(p, qd) };
        integrand[i] = kinetic - h.eval(q, p);
    }
    let integrand = GridFunction::from_values(scale.clone(), 1, integrand)?;
    Ok(delta_integral(&integrand, scale.a(), scale.b())?[0])
}

/// Directional derivative of the action along a boundary-vanishing
/// variation: `int [ p u^Delta + v q^Delta - H_q u - H_p v ] Delta t`.
pub fn frechet_action<R: Real>(
    h: &dyn Hamiltonian<R>,
    path: &PhasePath<R>,
    var: &Variation<R>,
) -> Result<R, R> {
    let scale = path.scale().clone();
    require_admissible(scale.as_ref())?;
    if !path.q.same_grid(&var.u.values) {
        return Err(Error::GridMismatch);
    }
    let n = path.q.len();
    let mut integrand = vec![R::zero(); n];
    for i in 0..n {
        let q = path.q.value(i);
        let p = path.p.value(i);
        let qd = path.q_delta.value(i);
        let u = var.u.values.value(i);
        let v = var.v.values.value(i);
        let ud = var.u.delta.value(i);
        let gq = h.grad_q(q, p);
        let gp = h.grad_p(q, p);
        let mut acc = R::zero();
        if !ud[0].is_nan() {
            acc += dot(p, ud);
        }
        if !qd[0].is_nan() {
            acc += dot(v, qd);
        }
        acc -= dot(&gq, u) + dot(&gp, v);
        integrand[i] = acc;
    }
    let integrand = GridFunction::from_values(scale.clone(), 1, integrand)?;
    Ok(delta_integral(&integrand, scale.a(), scale.b())?[0])
}

/// Output of the linearized operator or its adjoint: a `2d`-dimensional
/// field over the grid with per-point quality flags and the rd-limits the
/// quadrature needs at dense-to-scattered segment ends.
pub struct OperatorField<R: Real> {
    pub values: GridFunction<R>,
    pub quality: Vec<Quality>,
    pub limits: DenseLimits<R>,
}

fn apply_operator<R: Real>(
    field: &VectorField<R>,
    path: &PhasePath<R>,
    var: &Variation<R>,
    adjoint: bool,
) -> Result<OperatorField<R>, R> {
    let scale = path.scale().clone();
    let d = field.dim();
    if path.dim() != d || var.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: path.dim() });
    }
    let n = path.q.len();
    let mut values = vec![R::nan(); n * 2 * d];
    let mut quality = vec![Quality::OutOfDomain; n];
    let mut limits = DenseLimits::new();
    let mut tmp = vec![R::zero(); d];
    for i in 0..n {
        let u = var.u.values.value(i);
        let v = var.v.values.value(i);
        let ud = var.u.delta.value(i);
        let vn = var.v.nabla.value(i);
        let jac = field.jacobian(path.q.value(i), path.p.value(i));
        let slot = &mut values[i * 2 * d..(i + 1) * 2 * d];

        // The Jacobian contributions are shared by the pointwise value and
        // the rd-limit; only the derivative terms differ at a junction.
        let mut jac_q = vec![R::zero(); d];
        let mut jac_p = vec![R::zero(); d];
        if adjoint {
            matvec_t(&jac.xp_p, u, &mut tmp);
            for k in 0..d {
                jac_q[k] += tmp[k];
            }
            matvec_t(&jac.xq_p, v, &mut tmp);
            for k in 0..d {
                jac_q[k] -= tmp[k];
            }
            matvec_t(&jac.xp_q, u, &mut tmp);
            for k in 0..d {
                jac_p[k] -= tmp[k];
            }
            matvec_t(&jac.xq_q, v, &mut tmp);
            for k in 0..d {
                jac_p[k] += tmp[k];
            }
        } else {
            matvec(&jac.xq_q, u, &mut tmp);
            for k in 0..d {
                jac_q[k] -= tmp[k];
            }
            matvec(&jac.xq_p, v, &mut tmp);
            for k in 0..d {
                jac_q[k] -= tmp[k];
            }
            matvec(&jac.xp_q, u, &mut tmp);
            for k in 0..d {
                jac_p[k] -= tmp[k];
            }
            matvec(&jac.xp_p, v, &mut tmp);
            for k in 0..d {
                jac_p[k] -= tmp[k];
            }
        }

        // First block needs u^Delta, which exists on T^kappa.
        let mut q_ok = scale.in_delta_domain_idx(i);
        if q_ok {
            for k in 0..d {
                slot[k] = ud[k] + jac_q[k];
            }
        }

        // Second block needs rho^Delta v^nabla; rho^Delta vanishes at
        // right-scattered points with nu = 0, which covers a scattered
        // left endpoint, so the nabla factor is skipped there.
        let mut p_ok = true;
        match scale.rho_delta_idx(i) {
            Ok(rd) => {
                for k in 0..d {
                    let lead = if rd == R::zero() { R::zero() } else { rd * vn[k] };
                    slot[d + k] = lead + jac_p[k];
                }
            }
            Err(Error::Junction { .. }) => {
                quality[i] = Quality::Junction;
                p_ok = false;
            }
            Err(_) => {
                q_ok = false;
                p_ok = false;
            }
        }

        if q_ok && p_ok {
            quality[i] = if scale.is_junction_idx(i) { Quality::Junction } else { Quality::Ok };
        }

        // rd-limit at a dense-to-scattered junction: u^Delta tends to its
        // classical value and rho^Delta v^nabla to v'(t).
        if q_ok && p_ok && scale.class_idx(i).is_sigma_junction() {
            if let Some(ud_lim) = var.u.delta_limits.get(i) {
                let mut lim = vec![R::zero(); 2 * d];
                for k in 0..d {
                    lim[k] = ud_lim[k] + jac_q[k];
                    lim[d + k] = vn[k] + jac_p[k];
                }
                limits.insert(i, lim);
            }
        }
    }
    Ok(OperatorField {
        values: GridFunction::from_values(scale, 2 * d, values)?,
        quality,
        limits,
    })
}

/// Frechet derivative of the equation operator along `(u, v)`:
/// `(u^Delta - Xq_q u - Xq_p v ; rho^Delta v^nabla - Xp_q u - Xp_p v)`.
pub fn apply_dox<R: Real>(
    field: &VectorField<R>,
    path: &PhasePath<R>,
    var: &Variation<R>,
) -> Result<OperatorField<R>, R> {
    apply_operator(field, path, var, false)
}

/// Adjoint of the Frechet derivative under the symplectic pairing:
/// `(u^Delta + Xp_p^T u - Xq_p^T v ; rho^Delta v^nabla - Xp_q^T u + Xq_q^T v)`.
pub fn apply_adjoint_dox<R: Real>(
    field: &VectorField<R>,
    path: &PhasePath<R>,
    var: &Variation<R>,
) -> Result<OperatorField<R>, R> {
    apply_operator(field, path, var, true)
}

/// `<F, J g>` integrated over the scale, where `F` is an operator output and
/// `g` a boundary-vanishing variation. Out-of-domain slots sit at the
/// endpoints where `g` vanishes, so they contribute nothing.
pub fn pair_against_variation<R: Real>(
    f: &OperatorField<R>,
    g: &Variation<R>,
) -> Result<R, R> {
    let scale = f.values.scale().clone();
    let n = f.values.len();
    let two_d = f.values.dim();
    let d = two_d / 2;
    let pair = |fv: &[R], gu: &[R], gv: &[R]| -> R {
        let mut acc = R::zero();
        for k in 0..d {
            acc += fv[k] * gv[k] - fv[d + k] * gu[k];
        }
        acc
    };
    let mut integrand = vec![R::zero(); n];
    let mut limits = DenseLimits::new();
    for i in 0..n {
        if f.quality[i] == Quality::OutOfDomain {
            continue;
        }
        let gu = g.u.values.value(i);
        let gv = g.v.values.value(i);
        integrand[i] = pair(f.values.value(i), gu, gv);
        if let Some(lim) = f.limits.get(i) {
            limits.insert(i, vec![pair(lim, gu, gv)]);
        }
    }
    let integrand = GridFunction::from_values(scale.clone(), 1, integrand)?;
    Ok(delta_integral_limited(&integrand, Some(&limits), scale.a(), scale.b())?[0])
}

/// `|<DO f, g>_J - <DO* g, f>_J|` for one pair of variations; this identity
/// holds for every field, Hamiltonian or not.
pub fn adjoint_pairing_residual<R: Real>(
    field: &VectorField<R>,
    path: &PhasePath<R>,
    f: &Variation<R>,
    g: &Variation<R>,
) -> Result<R, R> {
    let df = apply_dox(field, path, f)?;
    let dg = apply_adjoint_dox(field, path, g)?;
    let lhs = pair_against_variation(&df, g)?;
    let rhs = pair_against_variation(&dg, f)?;
    Ok((lhs - rhs).abs())
}

/// Numerical self-adjointness test: the maximum over random variation pairs
/// of `|<DO f, g>_J - <DO g, f>_J|` normalized by the variation norms.
///
/// Requires `rho^Delta` to exist on the whole of `T^kappa`, which rules out
/// scattered-to-dense junctions; dense-to-scattered junctions are harmless
/// here because the operator never uses `sigma^nabla`.
pub fn selfadjointness_residual<R: Real>(
    field: &VectorField<R>,
    path: &PhasePath<R>,
    trials: usize,
    seed: u64,
) -> Result<R, R> {
    let scale = path.scale().clone();
    for &i in scale.junction_indices() {
        if scale.class_idx(i).is_rho_junction() {
            return Err(Error::NotAdmissible {
                count: scale.junction_indices().len(),
                first: scale.grid().point(i),
            });
        }
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("self-adjointness test needs trials >= 1".into()));
    }
    let d = field.dim();
    let mut worst = R::zero();
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let f = random_variation(&scale, d, &mut rng);
        let g = random_variation(&scale, d, &mut rng);
        let nf = f.norm()?;
        let ng = g.norm()?;
        if nf == R::zero() || ng == R::zero() {
            continue;
        }
        let df = apply_dox(field, path, &f)?;
        let dg = apply_dox(field, path, &g)?;
        let lhs = pair_against_variation(&df, &g)?;
        let rhs = pair_against_variation(&dg, &f)?;
        worst = worst.max((lhs - rhs).abs() / (nf * ng));
    }
    Ok(worst)
}
