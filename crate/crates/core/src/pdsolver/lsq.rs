use crate::barycentric::SparseInterpolator;
use crate::error::{Error, Result};
use crate::mesh2d::check_len;
use crate::scalar::Scalar;

/// Relative residual on the normal equations at which CG stops.
pub const LS_REL_TOL: f64 = 1e-8;

/// Least-squares vertex inverse depths minimizing `||A xi - b||_2^2`.
///
/// Runs conjugate gradient on the normal equations (CGLS form, which never
/// forms `A^T A`). Fails naming the first vertex that no pixel supports.
pub fn ls_fit<T: Scalar>(a: &SparseInterpolator<T>, b: &[T]) -> Result<Vec<T>> {
    check_len("measurements", a.n_rows(), b.len())?;
    if let Some(vertex) = a.support_counts().iter().position(|&c| c == 0) {
        return Err(Error::SingularSystem { vertex });
    }
    let n = a.n_vertices();
    let tol = T::of(LS_REL_TOL).max(T::epsilon() * T::of(100.0));
    let dot = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&p, &q)| p * q).sum::<T>();

    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut s = vec![T::zero(); n];
    a.apply_adjoint_into(&r, &mut s);
    let rhs_norm = dot(&s, &s).sqrt();
    if rhs_norm == T::zero() {
        return Ok(x);
    }
    let mut p = s.clone();
    let mut q = vec![T::zero(); b.len()];
    let mut gamma = dot(&s, &s);
    let max_iters = 20 * n + 100;
    for _ in 0..max_iters {
        a.apply_into(&p, &mut q);
        let qq = dot(&q, &q);
        if !(qq > T::zero()) {
            break;
        }
        let alpha = gamma / qq;
        for (xi, &pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, &qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        a.apply_adjoint_into(&r, &mut s);
        let next = dot(&s, &s);
        if next.sqrt() <= tol * rhs_norm {
            return Ok(x);
        }
        let beta = next / gamma;
        gamma = next;
        for (pi, &si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: (gamma.sqrt() / rhs_norm).to_f64_lossy(),
    })
}

/// Both sides of the dual representation of `||A xi - b||_1`: the norm itself
/// and `<A xi - b, sign(A xi - b)>`.
pub fn duality_gap_check<T: Scalar>(xi: &[T], a: &SparseInterpolator<T>, b: &[T]) -> Result<(T, T)> {
    check_len("measurements", a.n_rows(), b.len())?;
    let ax = a.apply(xi)?;
    let mut lhs = T::zero();
    let mut rhs = T::zero();
    for (&y, &bd) in ax.iter().zip(b) {
        let r = y - bd;
        lhs += r.abs();
        let sign = if r > T::zero() {
            T::one()
        } else if r < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        rhs += r * sign;
    }
    Ok((lhs, rhs))
}
