//! Closed-form resolvents of the dual and primal non-smooth terms.

use crate::scalar::Scalar;

/// Projection of a scalar onto `[-1, 1]` written as `x / max(1, |x|)`.
#[inline]
pub fn project_unit<T: Scalar>(x: T) -> T {
    x / T::one().max(x.abs())
}

/// Componentwise projection of every edge dual onto the unit l-infinity ball.
pub fn project_edge_duals<T: Scalar>(q: &mut [[T; 3]]) {
    for qe in q {
        for c in qe.iter_mut() {
            *c = project_unit(*c);
        }
    }
}

/// `p_j <- (p_j - offset_weight * b_j) / max(1, |p_j - offset_weight * b_j|)`.
///
/// Inside the primal-dual iteration the offset weight is `sigma * lambda`.
pub fn project_pixel_duals<T: Scalar>(p: &mut [T], offset_weight: T, b: &[T]) {
    for (pj, &bj) in p.iter_mut().zip(b) {
        *pj = project_unit(*pj - offset_weight * bj);
    }
}

/// Resolvent of the dual term: unit-ball projection of the edge duals and
/// offset projection of the pixel duals.
pub fn resolvent_fstar<T: Scalar>(q_tilde: &[[T; 3]], p_tilde: &[T], offset_weight: T, b: &[T]) -> (Vec<[T; 3]>, Vec<T>) {
    let mut q = q_tilde.to_vec();
    let mut p = p_tilde.to_vec();
    project_edge_duals(&mut q);
    project_pixel_duals(&mut p, offset_weight, b);
    (q, p)
}

/// Resolvent of `lambda * |xi - z|`: soft-thresholding toward `z` by
/// `tau * lambda`, or the identity when the vertex has no tracking datum.
#[inline]
pub fn resolvent_g<T: Scalar>(xi_tilde: T, z: Option<T>, tau: T, lambda: T) -> T {
    let Some(z) = z else { return xi_tilde };
    let t = tau * lambda;
    let d = xi_tilde - z;
    if d > t {
        xi_tilde - t
    } else if d < -t {
        xi_tilde + t
    } else {
        z
    }
}
