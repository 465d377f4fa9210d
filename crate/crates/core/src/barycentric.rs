//! The sparse map from vertex inverse depths to per-pixel inverse depths.
//!
//! Every valid pixel center is located in the mesh and contributes one row with
//! the three barycentric weights of its containing triangle. Rows are stored in
//! raster order; a column index is kept alongside so the adjoint can be
//! evaluated as a per-vertex gather with a fixed summation order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::mesh2d::{check_len, orient, Mesh2D};
use crate::scalar::Scalar;

/// One row of the interpolator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpRow<T> {
    /// Raster index of the pixel.
    pub pixel: usize,
    pub triangle: usize,
    pub vertices: [usize; 3],
    pub weights: [T; 3],
}

/// The part of a row the solver's inner loops read.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PackedRow<T> {
    pub vertices: [u32; 3],
    pub weights: [T; 3],
}

impl<T: Scalar> PackedRow<T> {
    #[inline]
    pub fn eval(&self, xi: &[T]) -> T {
        self.weights[0] * xi[self.vertices[0] as usize]
            + self.weights[1] * xi[self.vertices[1] as usize]
            + self.weights[2] * xi[self.vertices[2] as usize]
    }
}

#[derive(Clone, Debug)]
pub struct SparseInterpolator<T> {
    n_vertices: usize,
    rows: Vec<InterpRow<T>>,
    packed: Vec<PackedRow<T>>,
    col_ptr: Vec<usize>,
    col_entries: Vec<(usize, T)>,
}

fn weight_sum_tol<T: Scalar>() -> T {
    T::of(1e-9).max(T::epsilon() * T::of(64.0))
}

/// Barycentric weights of `p` in the counter-clockwise triangle `(a, b, c)`,
/// or `None` when `p` lies outside. Slightly negative weights are clamped.
pub fn barycentric_weights<T: Scalar>(a: [T; 2], b: [T; 2], c: [T; 2], p: [T; 2]) -> Option<[T; 3]> {
    let area = orient(a, b, c);
    if !(area > T::zero()) {
        return None;
    }
    let mut w = [orient(p, b, c) / area, orient(a, p, c) / area, orient(a, b, p) / area];
    let slack = T::weight_slack();
    if w.iter().any(|&x| x < -slack) {
        return None;
    }
    for x in &mut w {
        *x = x.max(T::zero());
    }
    let s = w[0] + w[1] + w[2];
    Some(w.map(|x| x / s))
}

/// Finds the lowest-index triangle containing `pixel` and its weights.
pub fn locate<T: Scalar>(mesh: &Mesh2D<T>, pixel: [T; 2]) -> Result<(usize, [T; 3])> {
    let v = mesh.vertices();
    mesh.triangles()
        .iter()
        .enumerate()
        .find_map(|(k, t)| barycentric_weights(v[t[0]].u, v[t[1]].u, v[t[2]].u, pixel).map(|w| (k, w)))
        .ok_or(Error::UncoveredPixel {
            u1: pixel[0].to_f64_lossy(),
            u2: pixel[1].to_f64_lossy(),
        })
}

/// Builds one row per valid pixel of `grid`, in raster order.
pub fn build_interpolator<T: Scalar>(mesh: &Mesh2D<T>, grid: &DepthGrid<T>) -> Result<SparseInterpolator<T>> {
    rasterize(mesh, grid.width(), grid.height(), grid.mask())
}

/// Interpolator over every pixel of the mesh's image, for rendering.
pub fn build_dense_interpolator<T: Scalar>(mesh: &Mesh2D<T>) -> Result<SparseInterpolator<T>> {
    let mask = vec![true; mesh.width() * mesh.height()];
    rasterize(mesh, mesh.width(), mesh.height(), &mask)
}

fn rasterize<T: Scalar>(mesh: &Mesh2D<T>, width: usize, height: usize, mask: &[bool]) -> Result<SparseInterpolator<T>> {
    let verts = mesh.vertices();
    let mut slots: Vec<Option<(usize, [T; 3])>> = vec![None; width * height];
    if width == 0 || height == 0 {
        return SparseInterpolator::from_rows(mesh.num_vertices(), Vec::new());
    }
    let clamp = |v: T, hi: usize| -> usize {
        let v = v.to_f64_lossy();
        if v <= 0.0 {
            0
        } else {
            (v as usize).min(hi)
        }
    };
    for (k, t) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = t.map(|i| verts[i].u);
        let lo_x = a[0].min(b[0]).min(c[0]).ceil();
        let hi_x = a[0].max(b[0]).max(c[0]).floor();
        let lo_y = a[1].min(b[1]).min(c[1]).ceil();
        let hi_y = a[1].max(b[1]).max(c[1]).floor();
        if hi_x < T::zero() || hi_y < T::zero() {
            continue;
        }
        let (x0, x1) = (clamp(lo_x, width - 1), clamp(hi_x, width - 1));
        let (y0, y1) = (clamp(lo_y, height - 1), clamp(hi_y, height - 1));
        for y in y0..=y1 {
            let py = T::of(y as f64);
            for x in x0..=x1 {
                let idx = y * width + x;
                if !mask[idx] || slots[idx].is_some() {
                    continue;
                }
                if let Some(w) = barycentric_weights(a, b, c, [T::of(x as f64), py]) {
                    slots[idx] = Some((k, w));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (idx, slot) in slots.into_iter().enumerate() {
        if !mask[idx] {
            continue;
        }
        let (tri, weights) = slot.ok_or(Error::UncoveredPixel {
            u1: (idx % width) as f64,
            u2: (idx / width) as f64,
        })?;
        rows.push(InterpRow {
            pixel: idx,
            triangle: tri,
            vertices: mesh.triangles()[tri],
            weights,
        });
    }
    SparseInterpolator::from_rows(mesh.num_vertices(), rows)
}

impl<T: Scalar> SparseInterpolator<T> {
    /// Assembles an interpolator from explicit rows.
    ///
    /// Rows must have strictly increasing pixel indices, valid vertex indices and
    /// weights that are non-negative (up to rounding) and sum to one.
    pub fn from_rows(n_vertices: usize, mut rows: Vec<InterpRow<T>>) -> Result<Self> {
        if u32::try_from(n_vertices).is_err() {
            return Err(Error::InvalidInput(format!("{n_vertices} vertices exceed the index range")));
        }
        let tol = weight_sum_tol::<T>();
        for (r, row) in rows.iter_mut().enumerate() {
            if row.vertices.iter().any(|&v| v >= n_vertices) {
                return Err(Error::InvalidInput(format!("row {r} references a missing vertex")));
            }
            if row.weights.iter().any(|&w| !(w >= -T::weight_slack())) {
                return Err(Error::InvalidInput(format!("row {r} has a negative weight")));
            }
            for w in &mut row.weights {
                *w = w.max(T::zero());
            }
            let s: T = row.weights.iter().copied().sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidInput(format!("row {r} weights sum to {s}")));
            }
        }
        if rows.windows(2).any(|w| w[0].pixel >= w[1].pixel) {
            return Err(Error::InvalidInput("rows must be in increasing pixel order".into()));
        }

        let mut counts = vec![0usize; n_vertices + 1];
        for row in &rows {
            for &v in &row.vertices {
                counts[v + 1] += 1;
            }
        }
        for k in 0..n_vertices {
            counts[k + 1] += counts[k];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut col_entries = vec![(0usize, T::zero()); 3 * rows.len()];
        for (r, row) in rows.iter().enumerate() {
            for (&v, &w) in row.vertices.iter().zip(&row.weights) {
                col_entries[fill[v]] = (r, w);
                fill[v] += 1;
            }
        }
        let packed = rows
            .iter()
            .map(|r| PackedRow {
                vertices: r.vertices.map(|v| v as u32),
                weights: r.weights,
            })
            .collect();
        Ok(SparseInterpolator {
            n_vertices,
            rows,
            packed,
            col_ptr,
            col_entries,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[InterpRow<T>] {
        &self.rows
    }

    /// `(row, weight)` entries of the column belonging to vertex `v`, in row order.
    pub fn column(&self, v: usize) -> &[(usize, T)] {
        &self.col_entries[self.col_ptr[v]..self.col_ptr[v + 1]]
    }

    /// Per-pixel inverse depths `A xi`.
    pub fn apply(&self, xi: &[T]) -> Result<Vec<T>> {
        check_len("vertex inverse depths", self.n_vertices, xi.len())?;
        let mut out = vec![T::zero(); self.rows.len()];
        self.apply_into(xi, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, xi: &[T], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(&self.packed) {
            *o = row.eval(xi);
        }
    }

    pub(crate) fn packed_rows(&self) -> &[PackedRow<T>] {
        &self.packed
    }

    /// Non-zero entries `(u, v, (A^T A)_uv)` in `(u, v)` order. Runs of rows
    /// with the same vertices, as produced by one triangle on one scanline,
    /// are summed locally before being merged.
    pub(crate) fn gram_entries(&self) -> Vec<(usize, usize, T)> {
        let mut acc: BTreeMap<(u32, u32), T> = BTreeMap::new();
        let mut flush = |verts: [u32; 3], local: &[[T; 3]; 3]| {
            for k in 0..3 {
                for l in 0..3 {
                    let e = acc.entry((verts[k], verts[l])).or_insert(T::zero());
                    *e = *e + local[k][l];
                }
            }
        };
        let mut current: Option<[u32; 3]> = None;
        let mut local = [[T::zero(); 3]; 3];
        for row in &self.packed {
            if current != Some(row.vertices) {
                if let Some(v) = current {
                    flush(v, &local);
                }
                current = Some(row.vertices);
                local = [[T::zero(); 3]; 3];
            }
            for k in 0..3 {
                for l in 0..3 {
                    local[k][l] = local[k][l] + row.weights[k] * row.weights[l];
                }
            }
        }
        if let Some(v) = current {
            flush(v, &local);
        }
        acc.into_iter()
            .filter(|(_, x)| *x != T::zero())
            .map(|((u, v), x)| (u as usize, v as usize, x))
            .collect()
    }

    /// Per-vertex accumulations `A^T p`.
    pub fn apply_adjoint(&self, p: &[T]) -> Result<Vec<T>> {
        check_len("pixel duals", self.rows.len(), p.len())?;
        let mut out = vec![T::zero(); self.n_vertices];
        self.apply_adjoint_into(p, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_adjoint_into(&self, p: &[T], out: &mut [T]) {
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.column(v).iter().fold(T::zero(), |acc, &(r, w)| acc + w * p[r]);
        }
    }

    /// Number of rows with a non-zero weight on each vertex.
    pub fn support_counts(&self) -> Vec<usize> {
        (0..self.n_vertices)
            .map(|v| self.column(v).iter().filter(|(_, w)| *w > T::zero()).count())
            .collect()
    }
}
