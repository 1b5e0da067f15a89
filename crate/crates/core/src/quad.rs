//! Gauss-Legendre quadrature on [0, 1].

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule mapped to [0, 1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial, started
/// from the Chebyshev estimate. Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre_unit<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    assert!(n >= 1, "quadrature rule needs at least one node");
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let half = R::of(0.5);
    let nf = R::of_usize(n);
    for i in 0..n {
        // Initial guess on [-1, 1].
        let theta = R::PI() * (R::of_usize(i) + R::of(0.75)) / (nf + half);
        let mut x = theta.cos();
        let mut dp = R::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= R::epsilon() * R::of(4.0) {
                break;
            }
        }
        let w = R::of(2.0) / ((R::one() - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1]; the node order is descending in x.
        nodes.push(half * (R::one() - x));
        weights.push(half * w);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_with_derivative<R: Real>(n: usize, x: R) -> (R, R) {
    let mut p0 = R::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = R::of_usize(k);
        let p2 = ((R::of(2.0) * kf - R::one()) * x * p1 - (kf - R::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (R::one(), R::zero());
    }
    if n == 1 {
        return (x, R::one());
    }
    let d = R::of_usize(n) * (x * p1 - p0) / (x * x - R::one());
    (p1, d)
}
