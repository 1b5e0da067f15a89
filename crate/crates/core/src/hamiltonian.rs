//! Hamiltonian functions on phase space.

use std::sync::Arc;

use crate::expr::{parse_expr, EvalCtx, Expr, Var, VarSet};
use crate::scalar::Real;

/// Scalar Hamiltonian `H(q, p)` with first derivatives and the mixed
/// second-derivative block needed by the implicit momentum update.
pub trait Hamiltonian<R: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, q: &[R], p: &[R]) -> R;

    fn grad_q(&self, q: &[R], p: &[R]) -> Vec<R>;

    fn grad_p(&self, q: &[R], p: &[R]) -> Vec<R>;

    /// Row-major `d x d` block with entry `(i, j) = d^2 H / dq_i dp_j`.
    /// The default central-difference fallback is accurate enough for the
    /// Newton Jacobian; expression-backed Hamiltonians override it exactly.
    fn grad_q_jac_p(&self, q: &[R], p: &[R]) -> Vec<R> {
        let d = self.dim();
        let mut out = vec![R::zero(); d * d];
        let mut pp = p.to_vec();
        let mut pm = p.to_vec();
        for j in 0..d {
            let h = R::of(1e-6) * R::one().max(p[j].abs());
            pp[j] = p[j] + h;
            pm[j] = p[j] - h;
            let gp = self.grad_q(q, &pp);
            let gm = self.grad_q(q, &pm);
            for i in 0..d {
                out[i * d + j] = (gp[i] - gm[i]) / (R::of(2.0) * h);
            }
            pp[j] = p[j];
            pm[j] = p[j];
        }
        out
    }
}

/// Hamiltonian backed by a parsed expression; all derivatives are exact
/// tree derivatives.
pub struct ExprHamiltonian {
    dim: usize,
    expr: Expr,
    dq: Vec<Expr>,
    dp: Vec<Expr>,
    dq_dp: Vec<Expr>,
}

impl ExprHamiltonian {
    pub fn parse(dim: usize, source: &str) -> Result<Self, crate::expr::ParseError> {
        let expr = parse_expr(source, VarSet::Phase { dim })?;
        Ok(Self::new(dim, expr))
    }

    pub fn new(dim: usize, expr: Expr) -> Self {
        let dq: Vec<Expr> = (0..dim).map(|i| expr.differentiate(Var::Q(i))).collect();
        let dp: Vec<Expr> = (0..dim).map(|i| expr.differentiate(Var::P(i))).collect();
        let mut dq_dp = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                dq_dp.push(dq[i].differentiate(Var::P(j)));
            }
        }
        ExprHamiltonian { dim, expr, dq, dp, dq_dp }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl<R: Real> Hamiltonian<R> for ExprHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, q: &[R], p: &[R]) -> R {
        self.expr.eval(&EvalCtx::phase(q, p))
    }

    fn grad_q(&self, q: &[R], p: &[R]) -> Vec<R> {
        let ctx = EvalCtx::phase(q, p);
        self.dq.iter().map(|e| e.eval(&ctx)).collect()
    }

    fn grad_p(&self, q: &[R], p: &[R]) -> Vec<R> {
        let ctx = EvalCtx::phase(q, p);
        self.dp.iter().map(|e| e.eval(&ctx)).collect()
    }

    fn grad_q_jac_p(&self, q: &[R], p: &[R]) -> Vec<R> {
        let ctx = EvalCtx::phase(q, p);
        self.dq_dp.iter().map(|e| e.eval(&ctx)).collect()
    }
}

type ScalarFn<R> = Arc<dyn Fn(&[R], &[R]) -> R + Send + Sync>;
type VectorFn<R> = Arc<dyn Fn(&[R], &[R]) -> Vec<R> + Send + Sync>;

/// Hamiltonian backed by opaque callables; gradients fall back to central
/// differences unless supplied.
pub struct ClosureHamiltonian<R: Real> {
    dim: usize,
    f: ScalarFn<R>,
    gq: Option<VectorFn<R>>,
    gp: Option<VectorFn<R>>,
}

impl<R: Real> ClosureHamiltonian<R> {
    pub fn new(dim: usize, f: impl Fn(&[R], &[R]) -> R + Send + Sync + 'static) -> Self {
        ClosureHamiltonian { dim, f: Arc::new(f), gq: None, gp: None }
    }

    pub fn with_gradients(
        mut self,
        gq: impl Fn(&[R], &[R]) -> Vec<R> + Send + Sync + 'static,
        gp: impl Fn(&[R], &[R]) -> Vec<R> + Send + Sync + 'static,
    ) -> Self {
        self.gq = Some(Arc::new(gq));
        self.gp = Some(Arc::new(gp));
        self
    }
}

impl<R: Real> Hamiltonian<R> for ClosureHamiltonian<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, q: &[R], p: &[R]) -> R {
        (self.f)(q, p)
    }

    fn grad_q(&self, q: &[R], p: &[R]) -> Vec<R> {
        if let Some(g) = &self.gq {
            return g(q, p);
        }
        central_gradient(self.dim, q, |z| (self.f)(z, p))
    }

    fn grad_p(&self, q: &[R], p: &[R]) -> Vec<R> {
        if let Some(g) = &self.gp {
            return g(q, p);
        }
        central_gradient(self.dim, p, |z| (self.f)(q, z))
    }
}

fn central_gradient<R: Real>(dim: usize, at: &[R], f: impl Fn(&[R]) -> R) -> Vec<R> {
    let mut out = vec![R::zero(); dim];
    let mut plus = at.to_vec();
    let mut minus = at.to_vec();
    for j in 0..dim {
        let h = R::of(1e-6) * R::one().max(at[j].abs());
        plus[j] = at[j] + h;
        minus[j] = at[j] - h;
        out[j] = (f(&plus) - f(&minus)) / (R::of(2.0) * h);
        plus[j] = at[j];
        minus[j] = at[j];
    }
    out
}
