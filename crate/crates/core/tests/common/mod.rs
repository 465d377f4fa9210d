#![allow(dead_code)]

use meshfit::{build_interpolator, triangulate, DepthGrid, Landmark, Mesh2D, SparseInterpolator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random landmarks plus the image corners, at most `max_vertices` in total,
/// on a random image no larger than `max_side` square.
pub fn random_mesh(rng: &mut ChaCha8Rng, max_vertices: usize, max_side: usize) -> Mesh2D<f64> {
    loop {
        let w = rng.random_range(4..=max_side);
        let h = rng.random_range(4..=max_side);
        let n = rng.random_range(0..=max_vertices - 4);
        let landmarks: Vec<Landmark<f64>> = (0..n)
            .map(|_| {
                let u = [
                    rng.random_range(0.0..(w - 1) as f64),
                    rng.random_range(0.0..(h - 1) as f64),
                ];
                let z = rng.random_bool(0.5).then(|| rng.random_range(0.2..2.0));
                Landmark::new(u[0], u[1], z)
            })
            .collect();
        if let Ok(mesh) = triangulate(&landmarks, (w, h), None) {
            if mesh.num_vertices() <= max_vertices {
                return mesh;
            }
        }
    }
}

/// Inverse-depth grid over the mesh's image with `invalid_frac` of pixels masked.
pub fn random_grid(rng: &mut ChaCha8Rng, mesh: &Mesh2D<f64>, invalid_frac: f64) -> DepthGrid<f64> {
    let n = mesh.width() * mesh.height();
    let mut values = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for _ in 0..n {
        let ok = !rng.random_bool(invalid_frac);
        values.push(if ok { rng.random_range(0.1..2.0) } else { 0.0 });
        mask.push(ok);
    }
    DepthGrid::new(mesh.width(), mesh.height(), values, mask).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, invalid_frac: f64) -> (Mesh2D<f64>, SparseInterpolator<f64>, Vec<f64>) {
    let mesh = random_mesh(rng, 30, 32);
    let grid = random_grid(rng, &mesh, invalid_frac);
    let a = build_interpolator(&mesh, &grid).unwrap();
    (mesh, a, grid.valid_values())
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let xi = random_vec(rng, n, -1.0, 1.0);
    let w = (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    (xi, w)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense `D` with columns ordered `(xi_v, w1_v, w2_v)` per vertex, rows `(e, k)`.
pub fn dense_d(mesh: &Mesh2D<f64>) -> Vec<Vec<f64>> {
    let n = mesh.num_vertices();
    let v = mesh.vertices();
    let mut rows = Vec::new();
    for e in mesh.edges() {
        let (ui, uj) = (v[e.i].u, v[e.j].u);
        let mut r0 = vec![0.0; 3 * n];
        r0[3 * e.i] = e.alpha;
        r0[3 * e.i + 1] = e.alpha * (uj[0] - ui[0]);
        r0[3 * e.i + 2] = e.alpha * (uj[1] - ui[1]);
        r0[3 * e.j] = -e.alpha;
        rows.push(r0);
        for k in 1..3 {
            let mut r = vec![0.0; 3 * n];
            r[3 * e.i + k] = e.beta;
            r[3 * e.j + k] = -e.beta;
            rows.push(r);
        }
    }
    rows
}

/// Dense `A` over vertex inverse depths.
pub fn dense_a(a: &SparseInterpolator<f64>) -> Vec<Vec<f64>> {
    a.rows()
        .iter()
        .map(|row| {
            let mut r = vec![0.0; a.n_vertices()];
            for (&v, &w) in row.vertices.iter().zip(&row.weights) {
                r[v] += w;
            }
            r
        })
        .collect()
}

pub fn flatten_state(xi: &[f64], w: &[[f64; 2]]) -> Vec<f64> {
    xi.iter().zip(w).flat_map(|(&x, g)| [x, g[0], g[1]]).collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
