use crate::barycentric::SparseInterpolator;
use crate::error::{Error, Result};
use crate::mesh2d::{check_len, Mesh2D};
use crate::nltgv::{apply_d_adjoint_into, apply_d_to};
use crate::scalar::Scalar;

const POWER_ITERATIONS: usize = 50;
const POWER_REL_TOL: f64 = 1e-6;
/// Multiplier applied to the power-iteration estimate, which approaches from below.
pub const NORM_SAFETY: f64 = 1.05;

/// Estimates `||K||` for `K x = (D x, lambda A x_xi)` by power iteration on
/// `K^T K`, inflated by [`NORM_SAFETY`]. `A^T A` is assembled once, so each
/// iteration costs only the mesh size.
pub fn estimate_operator_norm<T: Scalar>(mesh: &Mesh2D<T>, a: &SparseInterpolator<T>, lambda: T) -> Result<T> {
    check_len("vertex count", mesh.num_vertices(), a.n_vertices())?;
    let n = mesh.num_vertices();
    let uses_a = a.n_rows() > 0 && lambda != T::zero();
    if n == 0 || (mesh.edges().is_empty() && !uses_a) {
        return Err(Error::ZeroOperator);
    }

    // Deterministic, non-degenerate start vector.
    let start = |k: usize| T::of(1.5 + (0.618_033_988_75 * k as f64 + 0.25).fract());
    let mut xi: Vec<T> = (0..n).map(|k| start(3 * k)).collect();
    let mut w: Vec<[T; 2]> = (0..n).map(|k| [start(3 * k + 1), start(3 * k + 2)]).collect();
    normalize(&mut xi, &mut w);

    let gram = if uses_a { a.gram_entries() } else { Vec::new() };
    let mut dq = vec![[T::zero(); 3]; mesh.edges().len()];
    let mut next_xi = vec![T::zero(); n];
    let mut next_w = vec![[T::zero(); 2]; n];
    let mut eig = T::zero();
    for _ in 0..POWER_ITERATIONS {
        apply_d_to(mesh, &xi, &w, &mut dq);
        apply_d_adjoint_into(mesh, &dq, &mut next_xi, &mut next_w);
        let l2 = lambda * lambda;
        for &(u, v, g) in &gram {
            next_xi[u] += l2 * g * xi[v];
        }
        let next = normalize(&mut next_xi, &mut next_w);
        std::mem::swap(&mut xi, &mut next_xi);
        std::mem::swap(&mut w, &mut next_w);
        let prev = eig;
        eig = next;
        if (eig - prev).abs() < T::of(POWER_REL_TOL) * eig {
            break;
        }
    }
    if !(eig > T::zero()) {
        return Err(Error::ZeroOperator);
    }
    Ok(T::of(NORM_SAFETY) * eig.sqrt())
}

fn normalize<T: Scalar>(xi: &mut [T], w: &mut [[T; 2]]) -> T {
    let n2: T = xi.iter().map(|&x| x * x).sum::<T>() + w.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<T>();
    let norm = n2.sqrt();
    if norm > T::zero() {
        for x in xi.iter_mut() {
            *x /= norm;
        }
        for g in w.iter_mut() {
            g[0] /= norm;
            g[1] /= norm;
        }
    }
    norm
}
