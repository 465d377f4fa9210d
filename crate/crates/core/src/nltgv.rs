//! Discrete second-order non-local total generalized variation on mesh edges.
//!
//! For an edge `i -> j` the operator maps the six primal values
//! `(xi_i, w_i, xi_j, w_j)` to
//!
//! ```text
//! [ alpha * (xi_i - xi_j - <w_i, u_i - u_j>) ]
//! [ beta  * (w1_i - w1_j)                    ]
//! [ beta  * (w2_i - w2_j)                    ]
//! ```
//!
//! which vanishes whenever both vertices lie on one affine inverse-depth plane
//! whose image-space gradient is `w`.

use crate::error::Result;
use crate::mesh2d::{check_len, Edge, Mesh2D, VertexState};
use crate::scalar::Scalar;

/// Per-vertex output of the adjoint, split into inverse-depth and gradient parts.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointParts<T> {
    pub xi: Vec<T>,
    pub w: Vec<[T; 2]>,
}

#[inline]
pub fn apply_edge<T: Scalar>(
    edge: &Edge<T>,
    ui: [T; 2],
    uj: [T; 2],
    (xi_i, w_i): (T, [T; 2]),
    (xi_j, w_j): (T, [T; 2]),
) -> [T; 3] {
    let plane = xi_i - xi_j - (w_i[0] * (ui[0] - uj[0]) + w_i[1] * (ui[1] - uj[1]));
    [
        edge.alpha * plane,
        edge.beta * (w_i[0] - w_j[0]),
        edge.beta * (w_i[1] - w_j[1]),
    ]
}

/// `D_e` applied to the current state of the edge's two vertices.
pub fn apply_de<T: Scalar>(edge: &Edge<T>, vi: &VertexState<T>, vj: &VertexState<T>) -> [T; 3] {
    apply_edge(edge, vi.u, vj.u, (vi.xi, vi.w), (vj.xi, vj.w))
}

/// Transposed edge operator applied to `q`: the source-vertex block and the
/// sink-vertex block, each ordered `(xi, w1, w2)`.
#[inline]
pub fn edge_adjoint<T: Scalar>(edge: &Edge<T>, ui: [T; 2], uj: [T; 2], q: [T; 3]) -> ([T; 3], [T; 3]) {
    let aq = edge.alpha * q[0];
    let source = [
        aq,
        aq * (uj[0] - ui[0]) + edge.beta * q[1],
        aq * (uj[1] - ui[1]) + edge.beta * q[2],
    ];
    let sink = [-aq, -edge.beta * q[1], -edge.beta * q[2]];
    (source, sink)
}

/// Stacked `D` on the mesh's own state, in edge order.
pub fn apply_d<T: Scalar>(mesh: &Mesh2D<T>) -> Vec<[T; 3]> {
    let mut out = vec![[T::zero(); 3]; mesh.edges().len()];
    apply_d_to(mesh, &mesh.xi(), &mesh.w(), &mut out);
    out
}

/// Stacked `D` on an arbitrary state over the mesh's geometry.
pub fn apply_d_to<T: Scalar>(mesh: &Mesh2D<T>, xi: &[T], w: &[[T; 2]], out: &mut [[T; 3]]) {
    let v = mesh.vertices();
    for (o, e) in out.iter_mut().zip(mesh.edges()) {
        *o = apply_edge(e, v[e.i].u, v[e.j].u, (xi[e.i], w[e.i]), (xi[e.j], w[e.j]));
    }
}

/// `D^T q`, accumulated per vertex over its outgoing edges (source block) and
/// then its incoming edges (sink block), each in ascending edge order.
pub fn apply_d_adjoint<T: Scalar>(mesh: &Mesh2D<T>, q: &[[T; 3]]) -> Result<AdjointParts<T>> {
    check_len("edge duals", mesh.edges().len(), q.len())?;
    let n = mesh.num_vertices();
    let mut parts = AdjointParts {
        xi: vec![T::zero(); n],
        w: vec![[T::zero(); 2]; n],
    };
    apply_d_adjoint_into(mesh, q, &mut parts.xi, &mut parts.w);
    Ok(parts)
}

pub(crate) fn apply_d_adjoint_into<T: Scalar>(mesh: &Mesh2D<T>, q: &[[T; 3]], out_xi: &mut [T], out_w: &mut [[T; 2]]) {
    let verts = mesh.vertices();
    let edges = mesh.edges();
    for v in 0..verts.len() {
        let mut acc = [T::zero(); 3];
        for &e in mesh.outgoing(v) {
            let edge = &edges[e];
            let (src, _) = edge_adjoint(edge, verts[edge.i].u, verts[edge.j].u, q[e]);
            for k in 0..3 {
                acc[k] += src[k];
            }
        }
        for &e in mesh.incoming(v) {
            let edge = &edges[e];
            let (_, sink) = edge_adjoint(edge, verts[edge.i].u, verts[edge.j].u, q[e]);
            for k in 0..3 {
                acc[k] += sink[k];
            }
        }
        out_xi[v] = acc[0];
        out_w[v] = [acc[1], acc[2]];
    }
}

/// Sum over edges of `|D_e x|_1` for the mesh's own state.
pub fn nltgv_energy<T: Scalar>(mesh: &Mesh2D<T>) -> T {
    nltgv_energy_of(mesh, &mesh.xi(), &mesh.w())
}

pub fn nltgv_energy_of<T: Scalar>(mesh: &Mesh2D<T>, xi: &[T], w: &[[T; 2]]) -> T {
    let v = mesh.vertices();
    mesh.edges()
        .iter()
        .map(|e| {
            let d = apply_edge(e, v[e.i].u, v[e.j].u, (xi[e.i], w[e.i]), (xi[e.j], w[e.j]));
            d[0].abs() + d[1].abs() + d[2].abs()
        })
        .fold(T::zero(), |s, v| s + v)
}
