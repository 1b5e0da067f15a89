//! Minimal dense linear algebra for the small (d x d) Newton systems.

use crate::scalar::Real;

/// Solves `A x = b` in place by LU with partial pivoting.
///
/// `a` is row-major `n x n` and is overwritten; `b` becomes the solution.
/// Returns `false` when the matrix is numerically singular.
pub fn solve_in_place<R: Real>(a: &mut [R], b: &mut [R], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best <= R::zero() || !best.is_finite() {
            return false;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor != R::zero() {
                for k in col..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= factor * v;
                }
                let rhs = b[col];
                b[row] -= factor * rhs;
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    true
}

/// Max-abs asymmetry `max |M - M^T|` of a row-major `n x n` matrix.
pub fn asymmetry<R: Real>(m: &[R], n: usize) -> R {
    let mut worst = R::zero();
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[i * n + j] - m[j * n + i]).abs());
        }
    }
    worst
}

/// `out = M v` for a row-major `n x n` matrix.
pub fn matvec<R: Real>(m: &[R], v: &[R], out: &mut [R]) {
    let n = v.len();
    for i in 0..n {
        let mut acc = R::zero();
        for j in 0..n {
            acc += m[i * n + j] * v[j];
        }
        out[i] = acc;
    }
}

/// `out = M^T v` for a row-major `n x n` matrix.
pub fn matvec_t<R: Real>(m: &[R], v: &[R], out: &mut [R]) {
    let n = v.len();
    for i in 0..n {
        let mut acc = R::zero();
        for j in 0..n {
            acc += m[j * n + i] * v[j];
        }
        out[i] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = vec![2.0f64, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        assert!(solve_in_place(&mut a, &mut b, 2));
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((b[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(!solve_in_place(&mut a, &mut b, 2));
    }

    #[test]
    fn needs_pivoting() {
        let mut a = vec![0.0, 1.0, 1.0, 0.0];
        let mut b = vec![3.0, 7.0];
        assert!(solve_in_place(&mut a, &mut b, 2));
        assert_eq!(b, vec![7.0, 3.0]);
    }
}
