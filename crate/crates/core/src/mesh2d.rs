//! Image-plane triangular mesh over tracked landmarks and Steiner points.
//!
//! Vertices live in pixel coordinates. Each undirected vertex pair that shares a
//! triangle side is stored once as a directed edge from the lower to the higher
//! vertex index, together with its smoothness weights.

use std::collections::{BTreeSet, HashMap};

use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Points closer than this (in pixels) are merged during triangulation.
pub const MERGE_RADIUS_PX: f64 = 0.5;

/// A tracked point with an optional inverse depth from odometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark<T> {
    pub u: [T; 2],
    pub z: Option<T>,
}

impl<T: Scalar> Landmark<T> {
    pub fn new(u1: T, u2: T, z: Option<T>) -> Self {
        Landmark { u: [u1, u2], z }
    }
}

/// Geometry and primal state of one mesh vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexState<T> {
    /// Pixel position.
    pub u: [T; 2],
    /// Inverse depth (1/m).
    pub xi: T,
    /// Inverse-depth gradient in image space (1/m per pixel).
    pub w: [T; 2],
    /// Landmark inverse depth, when the vertex carries a tracking datum.
    pub z: Option<T>,
    pub is_steiner: bool,
}

impl<T: Scalar> VertexState<T> {
    pub fn landmark(u: [T; 2], z: Option<T>) -> Self {
        VertexState {
            u,
            xi: T::zero(),
            w: [T::zero(); 2],
            z,
            is_steiner: false,
        }
    }

    pub fn steiner(u: [T; 2]) -> Self {
        VertexState {
            u,
            xi: T::zero(),
            w: [T::zero(); 2],
            z: None,
            is_steiner: true,
        }
    }
}

/// Directed edge `i -> j` with weights `alpha` (1/px) and `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub alpha: T,
    pub beta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh2D<T> {
    width: usize,
    height: usize,
    vertices: Vec<VertexState<T>>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge<T>>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn orient<T: Scalar>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn steiner_axis(extent: usize, spacing: Option<usize>) -> Vec<usize> {
    let last = extent - 1;
    let mut axis = match spacing {
        Some(s) => (0..last).step_by(s).collect::<Vec<_>>(),
        None => vec![0],
    };
    axis.push(last);
    axis
}

/// Delaunay-triangulates `points` together with a regular Steiner grid and the
/// four image corners, so that the hull covers every pixel of the image.
///
/// Candidates closer than [`MERGE_RADIUS_PX`] are merged; landmarks come first
/// and therefore win over Steiner nodes. A landmark that close to an image
/// corner is moved onto it.
pub fn triangulate<T: Scalar>(
    points: &[Landmark<T>],
    image_size: (usize, usize),
    steiner_spacing: Option<usize>,
) -> Result<Mesh2D<T>> {
    let (width, height) = image_size;
    if width < 2 || height < 2 {
        return Err(Error::InvalidInput(format!(
            "image must be at least 2x2, got {width}x{height}"
        )));
    }
    if let Some(s) = steiner_spacing {
        if s < 2 {
            return Err(Error::InvalidInput(format!(
                "Steiner spacing must be at least 2 px, got {s}"
            )));
        }
    }
    let max = [T::of((width - 1) as f64), T::of((height - 1) as f64)];
    for (k, p) in points.iter().enumerate() {
        let inside = p.u.iter().zip(max).all(|(&c, m)| c.is_finite() && c >= T::zero() && c <= m);
        if !inside {
            return Err(Error::InvalidInput(format!(
                "landmark {k} at ({}, {}) lies outside the image",
                p.u[0], p.u[1]
            )));
        }
        if let Some(z) = p.z {
            if !(z.is_finite() && z > T::zero()) {
                return Err(Error::InvalidInput(format!(
                    "landmark {k} has non-positive inverse depth {z}"
                )));
            }
        }
    }

    // A landmark that would swallow an image corner takes the corner's place,
    // otherwise the hull loses that pixel.
    let r2 = T::of(MERGE_RADIUS_PX * MERGE_RADIUS_PX);
    let corners = [[T::zero(), T::zero()], [max[0], T::zero()], [T::zero(), max[1]], max];
    let snap = |u: [T; 2]| {
        corners
            .into_iter()
            .find(|c| {
                let (d0, d1) = (c[0] - u[0], c[1] - u[1]);
                d0 * d0 + d1 * d1 <= r2
            })
            .unwrap_or(u)
    };
    let mut candidates: Vec<VertexState<T>> = points
        .iter()
        .map(|p| VertexState::landmark(snap(p.u), p.z))
        .collect();
    let xs = steiner_axis(width, steiner_spacing);
    let ys = steiner_axis(height, steiner_spacing);
    for &y in &ys {
        for &x in &xs {
            candidates.push(VertexState::steiner([T::of(x as f64), T::of(y as f64)]));
        }
    }
    let vertices = dedup(candidates);

    let mut dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut handle_to_vertex = HashMap::with_capacity(vertices.len());
    for (k, v) in vertices.iter().enumerate() {
        let p = Point2::new(v.u[0].to_f64_lossy(), v.u[1].to_f64_lossy());
        let h = dt
            .insert(p)
            .map_err(|e| Error::InvalidInput(format!("vertex {k}: {e:?}")))?;
        handle_to_vertex.insert(h.index(), k);
    }
    if handle_to_vertex.len() != vertices.len() {
        return Err(Error::DegeneratePointSet("coincident vertices after merging".into()));
    }
    let triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| handle_to_vertex[&v.fix().index()]))
        .collect();
    if triangles.is_empty() {
        return Err(Error::DegeneratePointSet(
            "fewer than 3 non-collinear points".into(),
        ));
    }
    Mesh2D::from_triangles(width, height, vertices, triangles)
}

fn dedup<T: Scalar>(candidates: Vec<VertexState<T>>) -> Vec<VertexState<T>> {
    let cell = |u: [T; 2]| {
        (
            u[0].to_f64_lossy().floor() as i64,
            u[1].to_f64_lossy().floor() as i64,
        )
    };
    let r2 = T::of(MERGE_RADIUS_PX * MERGE_RADIUS_PX);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<VertexState<T>> = Vec::with_capacity(candidates.len());
    for v in candidates {
        let (cx, cy) = cell(v.u);
        let clash = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                buckets.get(&(cx + dx, cy + dy)).is_some_and(|ids| {
                    ids.iter().any(|&k| {
                        let d0 = kept[k].u[0] - v.u[0];
                        let d1 = kept[k].u[1] - v.u[1];
                        d0 * d0 + d1 * d1 <= r2
                    })
                })
            })
        });
        if !clash {
            buckets.entry((cx, cy)).or_default().push(kept.len());
            kept.push(v);
        }
    }
    kept
}

impl<T: Scalar> Mesh2D<T> {
    /// Builds a mesh from explicit triangles; edges are the union of their sides.
    ///
    /// Triangles are reoriented counter-clockwise and put in a canonical order.
    pub fn from_triangles(
        width: usize,
        height: usize,
        vertices: Vec<VertexState<T>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let triangles = canonical_triangles(&vertices, triangles)?;
        let pairs: BTreeSet<(usize, usize)> = triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Self::assemble(width, height, vertices, triangles, pairs.into_iter().collect())
    }

    /// Builds a mesh with an explicit edge list, which need not match the
    /// triangle sides. Used for small hand-built fixtures such as a lone edge.
    pub fn with_edges(
        width: usize,
        height: usize,
        vertices: Vec<VertexState<T>>,
        triangles: Vec<[usize; 3]>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let triangles = canonical_triangles(&vertices, triangles)?;
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) listed twice")));
            }
        }
        Self::assemble(width, height, vertices, triangles, seen.into_iter().collect())
    }

    fn assemble(
        width: usize,
        height: usize,
        vertices: Vec<VertexState<T>>,
        triangles: Vec<[usize; 3]>,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = vertices.len();
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(pairs.len());
        for (e, (i, j)) in pairs.into_iter().enumerate() {
            if i == j || j >= n {
                return Err(Error::InvalidInput(format!("invalid edge ({i}, {j})")));
            }
            outgoing[i].push(e);
            incoming[j].push(e);
            edges.push(Edge {
                i,
                j,
                alpha: T::zero(),
                beta: T::one(),
            });
        }
        let mut mesh = Mesh2D {
            width,
            height,
            vertices,
            triangles,
            edges,
            outgoing,
            incoming,
        };
        mesh.compute_edge_weights()?;
        Ok(mesh)
    }

    /// Sets `alpha = 1 / |u_i - u_j|` and `beta = 1` on every edge.
    pub fn compute_edge_weights(&mut self) -> Result<()> {
        for e in &mut self.edges {
            let ui = self.vertices[e.i].u;
            let uj = self.vertices[e.j].u;
            let len = (ui[0] - uj[0]).hypot(ui[1] - uj[1]);
            if !(len > T::zero()) {
                return Err(Error::DegenerateEdge { i: e.i, j: e.j });
            }
            e.alpha = len.recip();
            e.beta = T::one();
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vertices(&self) -> &[VertexState<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    /// Edges whose source is `v`.
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Edges whose sink is `v`.
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn xi(&self) -> Vec<T> {
        self.vertices.iter().map(|v| v.xi).collect()
    }

    pub fn w(&self) -> Vec<[T; 2]> {
        self.vertices.iter().map(|v| v.w).collect()
    }

    pub fn positions(&self) -> Vec<[T; 2]> {
        self.vertices.iter().map(|v| v.u).collect()
    }

    pub fn set_xi(&mut self, xi: &[T]) -> Result<()> {
        check_len("xi", self.vertices.len(), xi.len())?;
        for (v, &x) in self.vertices.iter_mut().zip(xi) {
            v.xi = x;
        }
        Ok(())
    }

    pub fn set_w(&mut self, w: &[[T; 2]]) -> Result<()> {
        check_len("w", self.vertices.len(), w.len())?;
        for (v, &g) in self.vertices.iter_mut().zip(w) {
            v.w = g;
        }
        Ok(())
    }

    pub fn set_z(&mut self, vertex: usize, z: Option<T>) {
        self.vertices[vertex].z = z;
    }

    /// Overrides `beta` on every edge.
    pub fn set_beta(&mut self, beta: T) {
        for e in &mut self.edges {
            e.beta = beta;
        }
    }

    /// `V - E + F` counting interior faces only; 1 for a triangulated disk.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, got })
    }
}

fn canonical_triangles<T: Scalar>(
    vertices: &[VertexState<T>],
    triangles: Vec<[usize; 3]>,
) -> Result<Vec<[usize; 3]>> {
    let mut out = Vec::with_capacity(triangles.len());
    for t in triangles {
        if t.iter().any(|&k| k >= vertices.len()) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::DegenerateTriangle(t));
        }
        let o = orient(vertices[t[0]].u, vertices[t[1]].u, vertices[t[2]].u);
        let mut t = if o > T::zero() {
            t
        } else if o < T::zero() {
            [t[0], t[2], t[1]]
        } else {
            return Err(Error::DegenerateTriangle(t));
        };
        let lead = (0..3).min_by_key(|&k| t[k]).unwrap_or(0);
        t.rotate_left(lead);
        out.push(t);
    }
    out.sort_unstable();
    Ok(out)
}

/// Recomputes the edge weights of `mesh`, returning the updated mesh.
pub fn edge_weights<T: Scalar>(mut mesh: Mesh2D<T>) -> Result<Mesh2D<T>> {
    mesh.compute_edge_weights()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(u1: f64, u2: f64) -> Landmark<f64> {
        Landmark::new(u1, u2, Some(0.5))
    }

    #[test]
    fn steiner_grid_merges_corners() {
        let mesh = triangulate::<f64>(&[], (64, 64), Some(50)).unwrap();
        let mut pos: Vec<(i64, i64)> = mesh
            .vertices()
            .iter()
            .map(|v| (v.u[0] as i64, v.u[1] as i64))
            .collect();
        pos.sort();
        let mut expected = Vec::new();
        for x in [0, 50, 63] {
            for y in [0, 50, 63] {
                expected.push((x, y));
            }
        }
        assert_eq!(pos, expected);
        assert!(mesh.vertices().iter().all(|v| v.is_steiner));
        assert_eq!(mesh.euler_characteristic(), 1);
    }

    #[test]
    fn three_landmarks_plus_corners() {
        let pts = [lm(10.0, 10.0), lm(30.5, 12.25), lm(20.0, 40.0)];
        let mesh = triangulate(&pts, (64, 48), None).unwrap();
        assert_eq!(mesh.num_vertices(), 7);
        assert_eq!(mesh.euler_characteristic(), 1);
        assert_eq!(mesh.vertices().iter().filter(|v| !v.is_steiner).count(), 3);
    }

    #[test]
    fn landmark_wins_over_coincident_steiner_node() {
        let pts = [Landmark::new(50.2, 49.9, Some(0.25))];
        let mesh = triangulate(&pts, (64, 64), Some(50)).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        let near: Vec<_> = mesh
            .vertices()
            .iter()
            .filter(|v| (v.u[0] - 50.0_f64).abs() < 1.0 && (v.u[1] - 50.0_f64).abs() < 1.0)
            .collect();
        assert_eq!(near.len(), 1);
        assert!(!near[0].is_steiner);
        assert_eq!(near[0].z, Some(0.25));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(triangulate::<f64>(&[], (1, 10), None).is_err());
        assert!(triangulate::<f64>(&[], (10, 10), Some(1)).is_err());
        assert!(triangulate(&[lm(10.0, 9.5)], (10, 10), None).is_err());
        assert!(triangulate(&[Landmark::new(1.0, 1.0, Some(-1.0))], (10, 10), None).is_err());
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let verts = vec![
            VertexState::steiner([0.0, 0.0]),
            VertexState::steiner([1.0, 1.0]),
            VertexState::steiner([2.0, 2.0]),
        ];
        let err = Mesh2D::from_triangles(3, 3, verts, vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTriangle(_)));
    }

    #[test]
    fn edge_weight_examples() {
        let verts = vec![
            VertexState::steiner([0.0, 0.0]),
            VertexState::steiner([3.0, 4.0]),
            VertexState::steiner([1.0, 0.0]),
        ];
        let mesh = Mesh2D::with_edges(5, 5, verts, vec![], &[(0, 1), (0, 2)]).unwrap();
        let mesh = edge_weights(mesh).unwrap();
        assert_eq!(mesh.edges()[0].alpha, 0.2);
        assert_eq!(mesh.edges()[1].alpha, 1.0);
        assert!(mesh.edges().iter().all(|e| e.beta == 1.0));

        let dup = vec![VertexState::steiner([10.0, 10.0]), VertexState::steiner([10.0, 10.0])];
        let err = Mesh2D::with_edges(20, 20, dup, vec![], &[(0, 1)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateEdge { i: 0, j: 1 }));
    }

    #[test]
    fn adjacency_is_consistent() {
        let pts = [lm(5.5, 7.0), lm(20.0, 3.0), lm(12.0, 18.0), lm(25.0, 25.0)];
        let mesh = triangulate(&pts, (32, 32), Some(8)).unwrap();
        for (k, e) in mesh.edges().iter().enumerate() {
            assert!(e.i < e.j);
            assert!(mesh.outgoing(e.i).contains(&k));
            assert!(mesh.incoming(e.j).contains(&k));
        }
        for t in mesh.triangles() {
            let v = mesh.vertices();
            assert!(orient(v[t[0]].u, v[t[1]].u, v[t[2]].u) > 0.0);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let mesh = triangulate::<f32>(&[], (16, 16), Some(4)).unwrap();
        assert_eq!(mesh.euler_characteristic(), 1);
    }
}
