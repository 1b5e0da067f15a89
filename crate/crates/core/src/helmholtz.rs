//! Helmholtz conditions and Hamiltonian reconstruction for first-order
//! vector fields on phase space.
//!
//! A field `X = (X_q, X_p)` admits a Hamiltonian formulation exactly when
//! its Jacobian satisfies the pointwise conditions
//! `dXq/dq + (dXp/dp)^T = 0` with `dXq/dp` and `dXp/dq` symmetric; the
//! Hamiltonian is then recovered by the radial integral
//! `H(z) = int_0^1 [p . X_q(lz) - q . X_p(lz)] dl`. The conditions contain
//! no time-scale quantity, so the verdict depends on the field alone.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse_expr, EvalCtx, Expr, Var, VarSet};
use crate::hamiltonian::Hamiltonian;
use crate::linalg::asymmetry;
use crate::quad::gauss_legendre_unit;
use crate::scalar::Real;

type VectorFn<R> = Arc<dyn Fn(&[R], &[R]) -> Vec<R> + Send + Sync>;

/// The four Jacobian blocks of a phase-space field, row-major `d x d` each.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks<R> {
    pub xq_q: Vec<R>,
    pub xq_p: Vec<R>,
    pub xp_q: Vec<R>,
    pub xp_p: Vec<R>,
}

enum Backend<R: Real> {
    Exprs {
        xq: Vec<Expr>,
        xp: Vec<Expr>,
        // Row-major derivative trees, one matrix per block.
        xq_q: Vec<Expr>,
        xq_p: Vec<Expr>,
        xp_q: Vec<Expr>,
        xp_p: Vec<Expr>,
    },
    Closures {
        xq: VectorFn<R>,
        xp: VectorFn<R>,
    },
}

/// First-order vector field `X = (X_q, X_p)` on `R^d x R^d`.
///
/// Expression-backed fields carry exact Jacobians from tree differentiation;
/// closure-backed fields fall back to central differences with step
/// `1e-6 * max(1, |z_i|)` per coordinate.
pub struct VectorField<R: Real> {
    dim: usize,
    backend: Backend<R>,
}

impl<R: Real> VectorField<R> {
    pub fn from_exprs(dim: usize, xq: Vec<Expr>, xp: Vec<Expr>) -> Result<Self, R> {
        if xq.len() != dim || xp.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: xq.len().max(xp.len()) });
        }
        let diff_block = |comps: &[Expr], var: fn(usize) -> Var| -> Vec<Expr> {
            let mut out = Vec::with_capacity(dim * dim);
            for i in 0..dim {
                for j in 0..dim {
                    out.push(comps[i].differentiate(var(j)));
                }
            }
            out
        };
        let xq_q = diff_block(&xq, Var::Q);
        let xq_p = diff_block(&xq, Var::P);
        let xp_q = diff_block(&xp, Var::Q);
        let xp_p = diff_block(&xp, Var::P);
        Ok(VectorField {
            dim,
            backend: Backend::Exprs { xq, xp, xq_q, xq_p, xp_q, xp_p },
        })
    }

    /// Parses the component sources against the phase variables `q1..qd`,
    /// `p1..pd`.
    pub fn parse(dim: usize, xq: &[&str], xp: &[&str]) -> Result<Self, R> {
        let parse_all = |srcs: &[&str]| -> Result<Vec<Expr>, R> {
            srcs.iter()
                .map(|s| parse_expr(s, VarSet::Phase { dim }).map_err(Error::from))
                .collect()
        };
        Self::from_exprs(dim, parse_all(xq)?, parse_all(xp)?)
    }

    pub fn from_closures(
        dim: usize,
        xq: impl Fn(&[R], &[R]) -> Vec<R> + Send + Sync + 'static,
        xp: impl Fn(&[R], &[R]) -> Vec<R> + Send + Sync + 'static,
    ) -> Self {
        VectorField {
            dim,
            backend: Backend::Closures { xq: Arc::new(xq), xp: Arc::new(xp) },
        }
    }

    /// `alpha * X + beta * Y`, closure-backed.
    pub fn linear_combination(alpha: R, x: &Arc<Self>, beta: R, y: &Arc<Self>) -> Result<Self, R> {
        if x.dim != y.dim {
            return Err(Error::DimensionMismatch { expected: x.dim, got: y.dim });
        }
        let dim = x.dim;
        let (xa, ya) = (x.clone(), y.clone());
        let xq = move |q: &[R], p: &[R]| -> Vec<R> {
            let u = xa.eval_xq(q, p);
            let v = ya.eval_xq(q, p);
            (0..dim).map(|i| alpha * u[i] + beta * v[i]).collect()
        };
        let (xa, ya) = (x.clone(), y.clone());
        let xp = move |q: &[R], p: &[R]| -> Vec<R> {
            let u = xa.eval_xp(q, p);
            let v = ya.eval_xp(q, p);
            (0..dim).map(|i| alpha * u[i] + beta * v[i]).collect()
        };
        Ok(Self::from_closures(dim, xq, xp))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        matches!(self.backend, Backend::Exprs { .. })
    }

    pub fn eval_xq(&self, q: &[R], p: &[R]) -> Vec<R> {
        match &self.backend {
            Backend::Exprs { xq, .. } => {
                let ctx = EvalCtx::phase(q, p);
                xq.iter().map(|e| e.eval(&ctx)).collect()
            }
            Backend::Closures { xq, .. } => xq(q, p),
        }
    }

    pub fn eval_xp(&self, q: &[R], p: &[R]) -> Vec<R> {
        match &self.backend {
            Backend::Exprs { xp, .. } => {
                let ctx = EvalCtx::phase(q, p);
                xp.iter().map(|e| e.eval(&ctx)).collect()
            }
            Backend::Closures { xp, .. } => xp(q, p),
        }
    }

    /// The four Jacobian blocks at the phase point `(q, p)`.
    pub fn jacobian(&self, q: &[R], p: &[R]) -> JacobianBlocks<R> {
        match &self.backend {
            Backend::Exprs { xq_q, xq_p, xp_q, xp_p, .. } => {
                let ctx = EvalCtx::phase(q, p);
                let eval_block =
                    |b: &[Expr]| -> Vec<R> { b.iter().map(|e| e.eval(&ctx)).collect() };
                JacobianBlocks {
                    xq_q: eval_block(xq_q),
                    xq_p: eval_block(xq_p),
                    xp_q: eval_block(xp_q),
                    xp_p: eval_block(xp_p),
                }
            }
            Backend::Closures { xq, xp } => {
                let d = self.dim;
                let fd_block = |f: &VectorFn<R>, wrt_q: bool| -> (Vec<R>, Vec<R>) {
                    // Returns (d f / d q, d f / d p) columns for one of them.
                    let mut out = vec![R::zero(); d * d];
                    let base = if wrt_q { q } else { p };
                    let mut plus = base.to_vec();
                    let mut minus = base.to_vec();
                    for j in 0..d {
                        let h = R::of(1e-6) * R::one().max(base[j].abs());
                        plus[j] = base[j] + h;
                        minus[j] = base[j] - h;
                        let (fp, fm) = if wrt_q {
                            (f(&plus, p), f(&minus, p))
                        } else {
                            (f(q, &plus), f(q, &minus))
                        };
                        for i in 0..d {
                            out[i * d + j] = (fp[i] - fm[i]) / (R::of(2.0) * h);
                        }
                        plus[j] = base[j];
                        minus[j] = base[j];
                    }
                    (out, Vec::new())
                };
                JacobianBlocks {
                    xq_q: fd_block(xq, true).0,
                    xq_p: fd_block(xq, false).0,
                    xp_q: fd_block(xp, true).0,
                    xp_p: fd_block(xp, false).0,
                }
            }
        }
    }
}

/// Verdict of the Helmholtz test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Hamiltonian,
    NotHamiltonian,
}

/// Worst violation found while sampling.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WorstViolation<R> {
    pub condition: String,
    pub value: R,
    pub location: Vec<R>,
}

/// Outcome of `check_conditions`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HelmholtzReport<R> {
    pub verdict: Verdict,
    pub trace_violation: R,
    pub asym_qp: R,
    pub asym_pq: R,
    pub tolerance: R,
    pub dimension: usize,
    pub samples: usize,
    pub failed_samples: usize,
    pub box_lo: R,
    pub box_hi: R,
    pub worst: WorstViolation<R>,
}

/// Options for `check_conditions`.
#[derive(Debug, Clone, Copy)]
pub struct CheckOptions<R> {
    pub samples: usize,
    /// Defaults to 1e-8 with analytic Jacobians and 1e-5 with
    /// finite-difference ones.
    pub tol: Option<R>,
    pub seed: u64,
}

impl<R> Default for CheckOptions<R> {
    fn default() -> Self {
        CheckOptions { samples: 128, tol: None, seed: 0 }
    }
}

/// Scrambled Halton points in `[0, 1)^dims`, deterministic for a seed.
fn scrambled_halton<R: Real>(dims: usize, count: usize, seed: u64) -> Vec<Vec<R>> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    assert!(dims <= PRIMES.len(), "phase dimension too large for sampler");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<u64>> = PRIMES[..dims]
        .iter()
        .map(|&b| {
            let mut digits: Vec<u64> = (0..b).collect();
            for i in (1..digits.len()).rev() {
                let j = rng.gen_range(0..=i);
                digits.swap(i, j);
            }
            digits
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for n in 1..=count as u64 {
        let mut point = Vec::with_capacity(dims);
        for (d, &b) in PRIMES[..dims].iter().enumerate() {
            let mut value = R::zero();
            let mut denom = R::one();
            let mut k = n;
            while k > 0 {
                denom *= R::of(b as f64);
                let digit = perms[d][(k % b) as usize];
                value += R::of(digit as f64) / denom;
                k /= b;
            }
            point.push(value);
        }
        out.push(point);
    }
    out
}

/// Evaluates the three Helmholtz conditions over a sampled phase box.
pub fn check_conditions<R: Real>(
    field: &VectorField<R>,
    box_lo: R,
    box_hi: R,
    opts: CheckOptions<R>,
) -> Result<HelmholtzReport<R>, R> {
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("check needs at least one sample".into()));
    }
    let d = field.dim();
    let tol = opts.tol.unwrap_or_else(|| {
        if field.has_analytic_jacobian() {
            R::of(1e-8)
        } else {
            R::of(1e-5)
        }
    });
    let points = scrambled_halton::<R>(2 * d, opts.samples, opts.seed);
    let width = box_hi - box_lo;
    let mut trace_violation = R::zero();
    let mut asym_qp = R::zero();
    let mut asym_pq = R::zero();
    let mut worst = WorstViolation { condition: "trace".to_string(), value: R::zero(), location: vec![R::zero(); 2 * d] };
    let mut failed = 0usize;
    for u in &points {
        let q: Vec<R> = (0..d).map(|i| box_lo + width * u[i]).collect();
        let p: Vec<R> = (0..d).map(|i| box_lo + width * u[d + i]).collect();
        let jac = field.jacobian(&q, &p);
        let finite = jac.xq_q.iter()
            .chain(&jac.xq_p)
            .chain(&jac.xp_q)
            .chain(&jac.xp_p)
            .all(|v| v.is_finite());
        if !finite {
            failed += 1;
            continue;
        }
        // Condition 1: dXq/dq + (dXp/dp)^T = 0, entrywise max.
        let mut trace_here = R::zero();
        for i in 0..d {
            for j in 0..d {
                trace_here = trace_here.max((jac.xq_q[i * d + j] + jac.xp_p[j * d + i]).abs());
            }
        }
        let qp_here = asymmetry(&jac.xq_p, d);
        let pq_here = asymmetry(&jac.xp_q, d);
        trace_violation = trace_violation.max(trace_here);
        asym_qp = asym_qp.max(qp_here);
        asym_pq = asym_pq.max(pq_here);
        for (name, value) in [("trace", trace_here), ("asym_qp", qp_here), ("asym_pq", pq_here)] {
            if value > worst.value {
                worst.condition = name.to_string();
                worst.value = value;
                worst.location = q.iter().chain(p.iter()).copied().collect();
            }
        }
    }
    if failed * 10 > opts.samples {
        return Err(Error::TooManyFailures { failed, total: opts.samples });
    }
    let verdict = if trace_violation <= tol && asym_qp <= tol && asym_pq <= tol {
        Verdict::Hamiltonian
    } else {
        Verdict::NotHamiltonian
    };
    Ok(HelmholtzReport {
        verdict,
        trace_violation,
        asym_qp,
        asym_pq,
        tolerance: tol,
        dimension: d,
        samples: opts.samples,
        failed_samples: failed,
        box_lo,
        box_hi,
        worst,
    })
}

/// Hamiltonian recovered from a field by the radial integral, evaluated with
/// Gauss-Legendre quadrature on [0, 1].
pub struct ReconstructedHamiltonian<R: Real> {
    field: Arc<VectorField<R>>,
    nodes: Vec<R>,
    weights: Vec<R>,
}

impl<R: Real> ReconstructedHamiltonian<R> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn field(&self) -> &Arc<VectorField<R>> {
        &self.field
    }
}

/// Builds the reconstruction evaluator with `n_nodes` quadrature nodes
/// (32 by default covers every smooth catalog field to machine precision).
///
/// The field must be evaluable on the ray `{lambda z : lambda in [0, 1]}`
/// for every requested `z`; singular fields surface as non-finite values.
pub fn reconstruct<R: Real>(field: Arc<VectorField<R>>, n_nodes: usize) -> ReconstructedHamiltonian<R> {
    let (nodes, weights) = gauss_legendre_unit::<R>(n_nodes.max(1));
    ReconstructedHamiltonian { field, nodes, weights }
}

impl<R: Real> Hamiltonian<R> for ReconstructedHamiltonian<R> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, q: &[R], p: &[R]) -> R {
        let d = self.dim();
        let mut acc = R::zero();
        let mut ql = vec![R::zero(); d];
        let mut pl = vec![R::zero(); d];
        for (&l, &w) in self.nodes.iter().zip(&self.weights) {
            for i in 0..d {
                ql[i] = l * q[i];
                pl[i] = l * p[i];
            }
            let xq = self.field.eval_xq(&ql, &pl);
            let xp = self.field.eval_xp(&ql, &pl);
            let mut term = R::zero();
            for i in 0..d {
                term += p[i] * xq[i] - q[i] * xp[i];
            }
            acc += w * term;
        }
        acc
    }

    // Gradients differentiate under the integral sign and reuse the nodes.

    fn grad_q(&self, q: &[R], p: &[R]) -> Vec<R> {
        let d = self.dim();
        let mut out = vec![R::zero(); d];
        let mut ql = vec![R::zero(); d];
        let mut pl = vec![R::zero(); d];
        for (&l, &w) in self.nodes.iter().zip(&self.weights) {
            for i in 0..d {
                ql[i] = l * q[i];
                pl[i] = l * p[i];
            }
            let xp = self.field.eval_xp(&ql, &pl);
            let jac = self.field.jacobian(&ql, &pl);
            for j in 0..d {
                let mut term = -xp[j];
                for i in 0..d {
                    term += l * (jac.xq_q[i * d + j] * p[i] - jac.xp_q[i * d + j] * q[i]);
                }
                out[j] += w * term;
            }
        }
        out
    }

    fn grad_p(&self, q: &[R], p: &[R]) -> Vec<R> {
        let d = self.dim();
        let mut out = vec![R::zero(); d];
        let mut ql = vec![R::zero(); d];
        let mut pl = vec![R::zero(); d];
        for (&l, &w) in self.nodes.iter().zip(&self.weights) {
            for i in 0..d {
                ql[i] = l * q[i];
                pl[i] = l * p[i];
            }
            let xq = self.field.eval_xq(&ql, &pl);
            let jac = self.field.jacobian(&ql, &pl);
            for j in 0..d {
                let mut term = xq[j];
                for i in 0..d {
                    term += l * (jac.xq_p[i * d + j] * p[i] - jac.xp_p[i * d + j] * q[i]);
                }
                out[j] += w * term;
            }
        }
        out
    }
}

/// Largest mismatch between the reconstructed gradients and the field:
/// `max_z ||grad_p H - X_q||_inf + ||grad_q H + X_p||_inf` over sampled `z`.
pub fn roundtrip_residual<R: Real>(
    field: &VectorField<R>,
    h: &ReconstructedHamiltonian<R>,
    box_lo: R,
    box_hi: R,
    samples: usize,
    seed: u64,
) -> Result<R, R> {
    let d = field.dim();
    let points = scrambled_halton::<R>(2 * d, samples, seed);
    let width = box_hi - box_lo;
    let mut worst = R::zero();
    let mut failed = 0usize;
    for u in &points {
        let q: Vec<R> = (0..d).map(|i| box_lo + width * u[i]).collect();
        let p: Vec<R> = (0..d).map(|i| box_lo + width * u[d + i]).collect();
        let gq = h.grad_q(&q, &p);
        let gp = h.grad_p(&q, &p);
        let xq = field.eval_xq(&q, &p);
        let xp = field.eval_xp(&q, &p);
        if !gq.iter().chain(&gp).chain(&xq).chain(&xp).all(|v| v.is_finite()) {
            failed += 1;
            continue;
        }
        let mut err_p = R::zero();
        let mut err_q = R::zero();
        for i in 0..d {
            err_p = err_p.max((gp[i] - xq[i]).abs());
            err_q = err_q.max((gq[i] + xp[i]).abs());
        }
        worst = worst.max(err_p + err_q);
    }
    if failed * 10 > samples {
        return Err(Error::TooManyFailures { failed, total: samples });
    }
    Ok(worst)
}

/// Named vector field with its expected classification, used by the
/// self-test catalog.
pub struct CatalogField<R: Real> {
    pub name: &'static str,
    pub field: Arc<VectorField<R>>,
    pub hamiltonian: bool,
    /// Closed-form Hamiltonian for the fields that have one.
    pub analytic: Option<Arc<dyn Fn(&[R], &[R]) -> R + Send + Sync>>,
}

/// The six reference fields: three Hamiltonian, three not.
pub fn catalog<R: Real>() -> Vec<CatalogField<R>> {
    let two = R::of(2.0);
    vec![
        CatalogField {
            name: "harmonic",
            field: Arc::new(VectorField::parse(1, &["p1"], &["-q1"]).unwrap()),
            hamiltonian: true,
            analytic: Some(Arc::new(move |q: &[R], p: &[R]| {
                (q[0] * q[0] + p[0] * p[0]) / two
            })),
        },
        CatalogField {
            name: "pendulum",
            field: Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap()),
            hamiltonian: true,
            analytic: Some(Arc::new(move |q: &[R], p: &[R]| {
                p[0] * p[0] / two + R::one() - q[0].cos()
            })),
        },
        CatalogField {
            name: "coupled_oscillator",
            field: Arc::new(
                VectorField::parse(2, &["p1", "p2"], &["-q1 - q2", "-q2 - q1"]).unwrap(),
            ),
            hamiltonian: true,
            analytic: Some(Arc::new(move |q: &[R], p: &[R]| {
                (q[0] * q[0] + q[1] * q[1] + p[0] * p[0] + p[1] * p[1]) / two + q[0] * q[1]
            })),
        },
        CatalogField {
            name: "damped_oscillator",
            field: Arc::new(VectorField::parse(1, &["p1"], &["-q1 - 0.1*p1"]).unwrap()),
            hamiltonian: false,
            analytic: None,
        },
        CatalogField {
            name: "shear",
            field: Arc::new(VectorField::parse(2, &["p2", "0"], &["0", "0"]).unwrap()),
            hamiltonian: false,
            analytic: None,
        },
        CatalogField {
            name: "rotation_plus_source",
            field: Arc::new(
                VectorField::parse(1, &["p1 + 0.5*q1"], &["-q1 + 0.5*p1"]).unwrap(),
            ),
            hamiltonian: false,
            analytic: None,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_blocks_examples() {
        let harmonic: VectorField<f64> = VectorField::parse(1, &["p1"], &["-q1"]).unwrap();
        let j = harmonic.jacobian(&[0.3], &[-0.8]);
        assert_eq!(j.xq_q, vec![0.0]);
        assert_eq!(j.xq_p, vec![1.0]);
        assert_eq!(j.xp_q, vec![-1.0]);
        assert_eq!(j.xp_p, vec![0.0]);

        let pendulum: VectorField<f64> = VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap();
        let j = pendulum.jacobian(&[0.0], &[0.0]);
        assert_eq!(j.xp_q, vec![-1.0]);
    }

    #[test]
    fn finite_difference_jacobian_agrees_with_analytic() {
        let expr: VectorField<f64> =
            VectorField::parse(1, &["p1 + 0.3*sin(q1)"], &["-q1*exp(0.2*p1)"]).unwrap();
        let fd = VectorField::from_closures(
            1,
            |q: &[f64], p: &[f64]| vec![p[0] + 0.3 * q[0].sin()],
            |q: &[f64], p: &[f64]| vec![-q[0] * (0.2 * p[0]).exp()],
        );
        for &(q, p) in &[(0.2, -0.5), (-0.9, 0.4), (0.0, 0.0)] {
            let ja = expr.jacobian(&[q], &[p]);
            let jf = fd.jacobian(&[q], &[p]);
            for (a, b) in [
                (&ja.xq_q, &jf.xq_q),
                (&ja.xq_p, &jf.xq_p),
                (&ja.xp_q, &jf.xp_q),
                (&ja.xp_p, &jf.xp_p),
            ] {
                assert!((a[0] - b[0]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn check_classifies_catalog_examples() {
        let harmonic: VectorField<f64> = VectorField::parse(1, &["p1"], &["-q1"]).unwrap();
        let r = check_conditions(&harmonic, -1.0, 1.0, CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Hamiltonian);
        assert!(r.trace_violation <= 1e-12 && r.asym_qp <= 1e-12 && r.asym_pq <= 1e-12);

        let damped: VectorField<f64> = VectorField::parse(1, &["p1"], &["-q1 - 0.1*p1"]).unwrap();
        let r = check_conditions(&damped, -1.0, 1.0, CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::NotHamiltonian);
        assert!((r.trace_violation - 0.1).abs() <= 1e-8);

        let shear: VectorField<f64> = VectorField::parse(2, &["p2", "0"], &["0", "0"]).unwrap();
        let r = check_conditions(&shear, -1.0, 1.0, CheckOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::NotHamiltonian);
        assert!((r.asym_qp - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn verdict_flips_only_when_tightening() {
        let damped: VectorField<f64> = VectorField::parse(1, &["p1"], &["-q1 - 0.1*p1"]).unwrap();
        let mut last_was_hamiltonian = true;
        for tol in [1.0, 0.5, 0.2, 0.09, 1e-4, 1e-9] {
            let r = check_conditions(
                &damped,
                -1.0,
                1.0,
                CheckOptions { samples: 64, tol: Some(tol), seed: 3 },
            )
            .unwrap();
            let is_h = r.verdict == Verdict::Hamiltonian;
            assert!(!is_h || last_was_hamiltonian, "verdict flipped back at tol {tol}");
            last_was_hamiltonian = is_h;
        }
        assert!(!last_was_hamiltonian);
    }

    #[test]
    fn reconstruct_harmonic_and_pendulum() {
        let harmonic: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-q1"]).unwrap());
        let h = reconstruct(harmonic, 32);
        for &(q, p) in &[(0.0, 0.0), (1.0, 0.0), (-0.7, 0.4), (0.3, -0.9)] {
            let want = (q * q + p * p) / 2.0;
            assert!((h.eval(&[q], &[p]) - want).abs() <= 1e-14);
        }
        assert_eq!(h.eval(&[0.0], &[0.0]), 0.0);

        let pendulum: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap());
        let h = reconstruct(pendulum, 32);
        for &(q, p) in &[(0.9f64, 0.1f64), (-0.5, 0.7), (0.0, 1.0)] {
            let want = p * p / 2.0 + 1.0 - q.cos();
            assert!((h.eval(&[q], &[p]) - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn roundtrip_examples() {
        let harmonic: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-q1"]).unwrap());
        let h = reconstruct(harmonic.clone(), 32);
        let r = roundtrip_residual(harmonic.as_ref(), &h, -1.0, 1.0, 128, 0).unwrap();
        assert!(r <= 1e-10);

        let pendulum: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap());
        let h = reconstruct(pendulum.clone(), 32);
        let r = roundtrip_residual(pendulum.as_ref(), &h, -1.0, 1.0, 128, 0).unwrap();
        assert!(r <= 1e-10);

        // Diagnostic run on a non-Hamiltonian field: the mismatch is visible.
        let damped: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-q1 - 0.1*p1"]).unwrap());
        let h = reconstruct(damped.clone(), 32);
        let r = roundtrip_residual(damped.as_ref(), &h, -1.0, 1.0, 128, 0).unwrap();
        assert!(r >= 0.01);
    }

    #[test]
    fn quadrature_convergence_is_monotone() {
        let pendulum: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap());
        let want = |q: f64, p: f64| p * p / 2.0 + 1.0 - q.cos();
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16, 32] {
            let h = reconstruct(pendulum.clone(), n);
            let mut err: f64 = 0.0;
            for &(q, p) in &[(0.9, 0.1), (-0.5, 0.7), (1.0, -1.0)] {
                err = err.max((h.eval(&[q], &[p]) - want(q, p)).abs());
            }
            assert!(err <= prev.max(1e-14), "error grew at n = {n}");
            prev = err;
        }
    }

    #[test]
    fn reconstruction_is_linear_in_the_field() {
        let x: Arc<VectorField<f64>> = Arc::new(VectorField::parse(1, &["p1"], &["-q1"]).unwrap());
        let y: Arc<VectorField<f64>> =
            Arc::new(VectorField::parse(1, &["p1"], &["-sin(q1)"]).unwrap());
        let combo = Arc::new(VectorField::linear_combination(2.0, &x, -0.5, &y).unwrap());
        let hx = reconstruct(x, 32);
        let hy = reconstruct(y, 32);
        let hc = reconstruct(combo, 32);
        for &(q, p) in &[(0.4, -0.6), (-0.9, 0.2), (0.0, 1.0)] {
            let want = 2.0 * hx.eval(&[q], &[p]) - 0.5 * hy.eval(&[q], &[p]);
            assert!((hc.eval(&[q], &[p]) - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluation_failures_are_counted_and_bounded() {
        // NaN on a thin sliver of the box: samples there are skipped and
        // counted, the verdict still forms.
        let spotty = VectorField::from_closures(
            1,
            |q: &[f64], p: &[f64]| {
                vec![if q[0] > 0.97 { f64::NAN } else { p[0] }]
            },
            |q: &[f64], _p: &[f64]| vec![-q[0]],
        );
        let r = check_conditions(&spotty, -1.0, 1.0, CheckOptions::default()).unwrap();
        assert!(r.failed_samples > 0);
        assert!(r.failed_samples * 10 <= r.samples);
        assert_eq!(r.verdict, Verdict::Hamiltonian);

        // NaN on half the box aborts.
        let broken = VectorField::from_closures(
            1,
            |q: &[f64], p: &[f64]| vec![if q[0] > 0.0 { f64::NAN } else { p[0] }],
            |q: &[f64], _p: &[f64]| vec![-q[0]],
        );
        assert!(matches!(
            check_conditions(&broken, -1.0, 1.0, CheckOptions::default()),
            Err(Error::TooManyFailures { .. })
        ));
    }

    #[test]
    fn sampler_is_deterministic_and_in_box() {
        let a = scrambled_halton::<f64>(4, 64, 9);
        let b = scrambled_halton::<f64>(4, 64, 9);
        assert_eq!(a, b);
        let c = scrambled_halton::<f64>(4, 64, 10);
        assert_ne!(a, c);
        for pt in &a {
            for &x in pt {
                assert!((0.0..1.0).contains(&x));
            }
        }
    }

    #[test]
    fn catalog_shape() {
        let cat = catalog::<f64>();
        assert_eq!(cat.len(), 6);
        assert_eq!(cat.iter().filter(|c| c.hamiltonian).count(), 3);
        for c in &cat {
            assert!(c.field.has_analytic_jacobian());
            assert_eq!(c.hamiltonian, c.analytic.is_some());
        }
    }
}
