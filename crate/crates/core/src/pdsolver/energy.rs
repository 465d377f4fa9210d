use serde::{Deserialize, Serialize};

use crate::barycentric::SparseInterpolator;
use crate::error::Result;
use crate::mesh2d::{check_len, Mesh2D};
use crate::nltgv::nltgv_energy_of;
use crate::scalar::Scalar;

/// Objective value split into its three terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown<T> {
    pub total: T,
    pub smooth: T,
    pub depth: T,
    pub tracking: T,
}

/// `E_smooth + lambda * (E_depth + E_tracking)` at the mesh's current state.
pub fn energy<T: Scalar>(mesh: &Mesh2D<T>, a: &SparseInterpolator<T>, b: &[T], lambda: T) -> Result<EnergyBreakdown<T>> {
    check_len("vertex count", mesh.num_vertices(), a.n_vertices())?;
    check_len("measurements", a.n_rows(), b.len())?;
    let mut scratch = vec![T::zero(); b.len()];
    Ok(energy_of(mesh, a, b, lambda, &mesh.xi(), &mesh.w(), &mut scratch))
}

pub(crate) fn energy_of<T: Scalar>(
    mesh: &Mesh2D<T>,
    a: &SparseInterpolator<T>,
    b: &[T],
    lambda: T,
    xi: &[T],
    w: &[[T; 2]],
    scratch: &mut [T],
) -> EnergyBreakdown<T> {
    let smooth = nltgv_energy_of(mesh, xi, w);
    a.apply_into(xi, scratch);
    let depth = scratch.iter().zip(b).map(|(&ax, &bd)| (ax - bd).abs()).fold(T::zero(), |s, v| s + v);
    let tracking = mesh
        .vertices()
        .iter()
        .zip(xi)
        .filter_map(|(v, &x)| v.z.map(|z| (x - z).abs()))
        .fold(T::zero(), |s, v| s + v);
    EnergyBreakdown {
        total: smooth + lambda * (depth + tracking),
        smooth,
        depth,
        tracking,
    }
}
