//! Synthetic piecewise-smooth inverse-depth scenes with ground truth, and a
//! grid-search oracle for tiny instances of the fitting objective.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; each concern draws from
//! its own stream so changing one fraction does not perturb the others:
//!
//! | stream | use                                   |
//! |--------|---------------------------------------|
//! | 0      | Gaussian noise, raster order          |
//! | 1      | outlier positions, then their values  |
//! | 2      | invalid-pixel positions               |
//! | 3      | landmark jitter, raster order of nodes|

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::barycentric::SparseInterpolator;
use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::mesh2d::{check_len, Landmark, Mesh2D};
use crate::pdsolver::energy;
use crate::scalar::Scalar;

const STREAM_NOISE: u64 = 0;
const STREAM_OUTLIERS: u64 = 1;
const STREAM_INVALID: u64 = 2;
const STREAM_LANDMARKS: u64 = 3;

/// Pixel region of one scene piece.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    /// `x0 <= u1 < x1` and `y0 <= u2 < y1`.
    Rect { x0: usize, y0: usize, x1: usize, y1: usize },
    /// `nx * u1 + ny * u2 >= c`.
    Above { nx: f64, ny: f64, c: f64 },
    /// `nx * u1 + ny * u2 < c`.
    Below { nx: f64, ny: f64, c: f64 },
    All,
}

impl Region {
    pub fn contains(&self, u1: f64, u2: f64) -> bool {
        match *self {
            Region::Rect { x0, y0, x1, y1 } => {
                u1 >= x0 as f64 && u1 < x1 as f64 && u2 >= y0 as f64 && u2 < y1 as f64
            }
            Region::Above { nx, ny, c } => nx * u1 + ny * u2 >= c,
            Region::Below { nx, ny, c } => nx * u1 + ny * u2 < c,
            Region::All => true,
        }
    }
}

/// Inverse depth as a function of pixel position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    /// `a u1 + b u2 + c`.
    Affine { a: f64, b: f64, c: f64 },
    /// `a u1^2 + b u2^2 + c u1 u2 + d u1 + e u2 + f`.
    Quadratic { a: f64, b: f64, c: f64, d: f64, e: f64, f: f64 },
}

impl Surface {
    pub fn eval(&self, u1: f64, u2: f64) -> f64 {
        match *self {
            Surface::Affine { a, b, c } => a * u1 + b * u2 + c,
            Surface::Quadratic { a, b, c, d, e, f } => {
                a * u1 * u1 + b * u2 * u2 + c * u1 * u2 + d * u1 + e * u2 + f
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub region: Region,
    pub surface: Surface,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Pieces must partition the image: every pixel in exactly one region.
    pub pieces: Vec<Piece>,
    /// Standard deviation of additive Gaussian noise on inverse depth.
    pub noise_sigma: f64,
    pub outlier_frac: f64,
    /// Uniform range outlier values are drawn from.
    pub outlier_range: (f64, f64),
    pub invalid_frac: f64,
    /// Spacing of the jittered landmark grid; `None` produces no landmarks.
    pub landmark_spacing: Option<usize>,
    pub seed: u64,
}

impl SceneSpec {
    fn base(width: usize, height: usize, pieces: Vec<Piece>) -> Self {
        SceneSpec {
            width,
            height,
            pieces,
            noise_sigma: 0.0,
            outlier_frac: 0.0,
            outlier_range: (0.05, 2.0),
            invalid_frac: 0.0,
            landmark_spacing: None,
            seed: 0,
        }
    }

    pub fn plane(width: usize, height: usize, a: f64, b: f64, c: f64) -> Self {
        Self::base(
            width,
            height,
            vec![Piece {
                region: Region::All,
                surface: Surface::Affine { a, b, c },
            }],
        )
    }

    /// Two planes split by the vertical line `u1 = split`.
    pub fn two_planes(width: usize, height: usize, split: f64, left: Surface, right: Surface) -> Self {
        Self::base(
            width,
            height,
            vec![
                Piece {
                    region: Region::Below { nx: 1.0, ny: 0.0, c: split },
                    surface: left,
                },
                Piece {
                    region: Region::Above { nx: 1.0, ny: 0.0, c: split },
                    surface: right,
                },
            ],
        )
    }

    pub fn single(width: usize, height: usize, surface: Surface) -> Self {
        Self::base(
            width,
            height,
            vec![Piece {
                region: Region::All,
                surface,
            }],
        )
    }

    /// A bowl: quadratic inverse depth falling from 0.9 at the corners to
    /// 0.15 at the image centre.
    pub fn bowl(width: usize, height: usize) -> Self {
        let (sx, sy) = (width as f64, height as f64);
        Self::single(
            width,
            height,
            Surface::Quadratic {
                a: 1.5 / (sx * sx),
                b: 1.5 / (sy * sy),
                c: 0.0,
                d: -1.5 / sx,
                e: -1.5 / sy,
                f: 0.9,
            },
        )
    }

    /// The piece covering `(u1, u2)`, first match.
    fn piece_at(&self, u1: f64, u2: f64) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.region.contains(u1, u2))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("image must be at least 2x2, got {}x{}", self.width, self.height));
        }
        if self.pieces.is_empty() {
            return bad("no scene pieces".into());
        }
        for (name, f) in [("outlier_frac", self.outlier_frac), ("invalid_frac", self.invalid_frac)] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1], got {f}"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let (lo, hi) = self.outlier_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("outlier range must satisfy lo < hi, got ({lo}, {hi})"));
        }
        if self.outlier_frac > 0.0 && lo <= 0.0 {
            return bad(format!("outlier range must be positive, got ({lo}, {hi})"));
        }
        if let Some(s) = self.landmark_spacing {
            if s < 2 {
                return bad(format!("landmark spacing must be at least 2, got {s}"));
            }
        }
        for y in 0..self.height {
            for x in 0..self.width {
                let (u1, u2) = (x as f64, y as f64);
                let mut hits = self.pieces.iter().filter(|p| p.region.contains(u1, u2));
                let Some(piece) = hits.next() else {
                    return bad(format!("pixel ({x}, {y}) is not covered by any region"));
                };
                if hits.next().is_some() {
                    return bad(format!("pixel ({x}, {y}) is covered by more than one region"));
                }
                let v = piece.surface.eval(u1, u2);
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("inverse depth {v} at pixel ({x}, {y}) is not positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scene<T> {
    pub observed: DepthGrid<T>,
    pub truth: DepthGrid<T>,
    /// Pixels that are valid in `observed` and were not replaced by outliers.
    pub inliers: Vec<bool>,
    pub landmarks: Vec<Landmark<T>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Renders the noiseless truth and a corrupted observation of `spec`.
pub fn generate<T: Scalar>(spec: &SceneSpec) -> Result<Scene<T>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w * h;
    let truth_f64: Vec<f64> = (0..n)
        .map(|k| {
            let (u1, u2) = ((k % w) as f64, (k / w) as f64);
            spec.piece_at(u1, u2).map_or(f64::NAN, |p| p.surface.eval(u1, u2))
        })
        .collect();

    let mut observed = truth_f64.clone();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut rng = stream(spec.seed, STREAM_NOISE);
        for v in &mut observed {
            *v += normal.sample(&mut rng);
        }
    }

    let mut outlier = vec![false; n];
    let n_out = (spec.outlier_frac * n as f64).round() as usize;
    if n_out > 0 {
        let mut rng = stream(spec.seed, STREAM_OUTLIERS);
        let positions = index::sample(&mut rng, n, n_out).into_vec();
        let (lo, hi) = spec.outlier_range;
        for k in positions {
            observed[k] = rng.random_range(lo..hi);
            outlier[k] = true;
        }
    }

    let mut valid: Vec<bool> = observed.iter().map(|&v| v > 0.0 && v.is_finite()).collect();
    let n_invalid = (spec.invalid_frac * n as f64).round() as usize;
    if n_invalid > 0 {
        let mut rng = stream(spec.seed, STREAM_INVALID);
        for k in index::sample(&mut rng, n, n_invalid) {
            valid[k] = false;
        }
    }

    let landmarks = match spec.landmark_spacing {
        Some(s) => jittered_landmarks(spec, s)?,
        None => Vec::new(),
    };

    let cast = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
    let inliers = (0..n).map(|k| valid[k] && !outlier[k]).collect();
    let observed_values: Vec<T> = observed
        .iter()
        .zip(&valid)
        .map(|(&v, &ok)| if ok { T::of(v) } else { T::nan() })
        .collect();
    Ok(Scene {
        observed: DepthGrid::new(w, h, observed_values, valid)?,
        truth: DepthGrid::from_values(w, h, cast(&truth_f64))?,
        inliers,
        landmarks,
    })
}

fn jittered_landmarks<T: Scalar>(spec: &SceneSpec, spacing: usize) -> Result<Vec<Landmark<T>>> {
    let mut rng = stream(spec.seed, STREAM_LANDMARKS);
    let s = spacing as f64;
    let (max1, max2) = ((spec.width - 1) as f64, (spec.height - 1) as f64);
    let mut out = Vec::new();
    let mut y = s / 2.0;
    while y < max2 {
        let mut x = s / 2.0;
        while x < max1 {
            let j1: f64 = rng.random_range(-0.25..0.25);
            let j2: f64 = rng.random_range(-0.25..0.25);
            let u1 = (x + j1 * s).clamp(0.0, max1);
            let u2 = (y + j2 * s).clamp(0.0, max2);
            let piece = spec
                .piece_at(u1.round(), u2.round())
                .ok_or_else(|| Error::InvalidSpec(format!("landmark ({u1}, {u2}) is uncovered")))?;
            let z = piece.surface.eval(u1, u2);
            if z > 0.0 {
                out.push(Landmark::new(T::of(u1), T::of(u2), Some(T::of(z))));
            }
            x += s;
        }
        y += s;
    }
    Ok(out)
}

/// Uniform search grid `lo, lo + step, ..., hi` for [`oracle_minimize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            lo: 0.1,
            hi: 2.0,
            step: 1e-3,
        }
    }
}

impl OracleGrid {
    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 0.5).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }
}

/// `scale * |c + g . f|` over the free variables `f`.
#[derive(Clone, Copy)]
struct Term {
    scale: f64,
    c: f64,
    g: [f64; 3],
}

/// Exhaustive grid minimization of the fitting energy over at most three free
/// vertex inverse depths, with every `w` and every other `xi` held at the
/// mesh's values.
///
/// With three free variables the innermost coordinate is minimized in closed
/// form: for fixed outer values the energy is a convex piecewise-linear
/// function of it, so the best grid value is adjacent to its weighted median.
/// Returns the full inverse-depth vector and its energy.
pub fn oracle_minimize<T: Scalar>(
    mesh: &Mesh2D<T>,
    free: &[usize],
    a: &SparseInterpolator<T>,
    b: &[T],
    lambda: T,
    grid: OracleGrid,
) -> Result<(Vec<T>, T)> {
    if free.len() > 3 {
        return Err(Error::OracleScaleExceeded { free: free.len() });
    }
    check_len("vertex count", mesh.num_vertices(), a.n_vertices())?;
    check_len("measurements", a.n_rows(), b.len())?;
    if free.iter().any(|&v| v >= mesh.num_vertices()) {
        return Err(Error::InvalidInput("free vertex index out of range".into()));
    }
    if !(grid.step > 0.0 && grid.lo <= grid.hi) {
        return Err(Error::InvalidInput("oracle grid must have lo <= hi and step > 0".into()));
    }

    let terms = linear_terms(mesh, free, a, b, lambda.to_f64_lossy());
    let n = grid.len();
    let eval = |f: [f64; 3]| -> f64 {
        terms
            .iter()
            .map(|t| t.scale * (t.c + t.g[0] * f[0] + t.g[1] * f[1] + t.g[2] * f[2]).abs())
            .sum()
    };

    let mut best = (f64::INFINITY, [0usize; 3]);
    let mut consider = |e: f64, k: [usize; 3]| {
        if e < best.0 {
            best = (e, k);
        }
    };
    match free.len() {
        0 => consider(eval([0.0; 3]), [0; 3]),
        1 => {
            for i in 0..n {
                consider(eval([grid.value(i), 0.0, 0.0]), [i, 0, 0]);
            }
        }
        2 => {
            for i in 0..n {
                for j in 0..n {
                    consider(eval([grid.value(i), grid.value(j), 0.0]), [i, j, 0]);
                }
            }
        }
        _ => {
            let mut breaks: Vec<(f64, f64)> = Vec::with_capacity(terms.len());
            for i in 0..n {
                let f0 = grid.value(i);
                for j in 0..n {
                    let f1 = grid.value(j);
                    let k = inner_argmin(&terms, f0, f1, &grid, &mut breaks);
                    let mut ks = vec![k];
                    if k + 1 < n {
                        ks.push(k + 1);
                    }
                    for k in ks {
                        consider(eval([f0, f1, grid.value(k)]), [i, j, k]);
                    }
                }
            }
        }
    }

    let mut xi = mesh.xi();
    for (slot, &v) in free.iter().enumerate() {
        xi[v] = T::of(grid.value(best.1[slot]));
    }
    let mut probe = mesh.clone();
    probe.set_xi(&xi)?;
    let e = energy(&probe, a, b, lambda)?;
    Ok((xi, e.total))
}

/// Largest grid index not above the weighted median of the third coordinate's
/// breakpoints, clamped to the grid.
fn inner_argmin(terms: &[Term], f0: f64, f1: f64, grid: &OracleGrid, breaks: &mut Vec<(f64, f64)>) -> usize {
    breaks.clear();
    for t in terms {
        let g = t.g[2];
        if g != 0.0 {
            let c = t.c + t.g[0] * f0 + t.g[1] * f1;
            breaks.push((-c / g, t.scale * g.abs()));
        }
    }
    if breaks.is_empty() {
        return 0;
    }
    breaks.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = breaks.iter().map(|b| b.1).sum();
    let mut acc = 0.0;
    let mut med = breaks[breaks.len() - 1].0;
    for &(x, wgt) in breaks.iter() {
        acc += wgt;
        if acc >= 0.5 * total {
            med = x;
            break;
        }
    }
    let n = grid.len();
    let k = ((med - grid.lo) / grid.step).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

fn linear_terms<T: Scalar>(mesh: &Mesh2D<T>, free: &[usize], a: &SparseInterpolator<T>, b: &[T], lambda: f64) -> Vec<Term> {
    let slot = |v: usize| free.iter().position(|&f| f == v);
    let verts = mesh.vertices();
    let xi = |v: usize| verts[v].xi.to_f64_lossy();
    let mut terms = Vec::new();
    // Adds `coef * xi_v` to a term, either as a constant or a free coefficient.
    let add = |t: &mut Term, v: usize, coef: f64| match slot(v) {
        Some(s) => t.g[s] += coef,
        None => t.c += coef * xi(v),
    };
    for e in mesh.edges() {
        let (vi, vj) = (&verts[e.i], &verts[e.j]);
        let f = |x: T| x.to_f64_lossy();
        let alpha = f(e.alpha);
        let beta = f(e.beta);
        let wi = [f(vi.w[0]), f(vi.w[1])];
        let wj = [f(vj.w[0]), f(vj.w[1])];
        let du = [f(vi.u[0]) - f(vj.u[0]), f(vi.u[1]) - f(vj.u[1])];
        let mut t = Term {
            scale: 1.0,
            c: -alpha * (wi[0] * du[0] + wi[1] * du[1]),
            g: [0.0; 3],
        };
        add(&mut t, e.i, alpha);
        add(&mut t, e.j, -alpha);
        terms.push(t);
        for k in 0..2 {
            terms.push(Term {
                scale: 1.0,
                c: beta * (wi[k] - wj[k]),
                g: [0.0; 3],
            });
        }
    }
    for (row, &bd) in a.rows().iter().zip(b) {
        let mut t = Term {
            scale: lambda,
            c: -bd.to_f64_lossy(),
            g: [0.0; 3],
        };
        for (&v, &wgt) in row.vertices.iter().zip(&row.weights) {
            add(&mut t, v, wgt.to_f64_lossy());
        }
        terms.push(t);
    }
    for (v, vs) in verts.iter().enumerate() {
        if let Some(z) = vs.z {
            let mut t = Term {
                scale: lambda,
                c: -z.to_f64_lossy(),
                g: [0.0; 3],
            };
            add(&mut t, v, 1.0);
            terms.push(t);
        }
    }
    terms
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_scene_matches_truth() {
        let spec = SceneSpec::plane(20, 10, 0.001, 0.002, 0.4);
        let scene = generate::<f64>(&spec).unwrap();
        assert_eq!(scene.observed.values(), scene.truth.values());
        assert!(scene.inliers.iter().all(|&x| x));
    }

    #[test]
    fn all_outliers() {
        let mut spec = SceneSpec::plane(16, 16, 0.0, 0.0, 0.5);
        spec.outlier_frac = 1.0;
        spec.outlier_range = (0.6, 1.0);
        let scene = generate::<f64>(&spec).unwrap();
        assert!(scene.inliers.iter().all(|&x| !x));
        assert!(scene.observed.values().iter().all(|&v| v != 0.5));
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let mut spec = SceneSpec::plane(32, 24, 0.001, -0.001, 0.6);
        spec.noise_sigma = 0.01;
        spec.outlier_frac = 0.1;
        spec.invalid_frac = 0.1;
        spec.landmark_spacing = Some(8);
        spec.seed = 42;
        let a = generate::<f64>(&spec).unwrap();
        let b = generate::<f64>(&spec).unwrap();
        let bits = |g: &DepthGrid<f64>| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.observed), bits(&b.observed));
        assert_eq!(a.observed.mask(), b.observed.mask());
        assert_eq!(a.landmarks, b.landmarks);
        spec.seed = 43;
        let c = generate::<f64>(&spec).unwrap();
        assert_ne!(bits(&a.observed), bits(&c.observed));
    }

    #[test]
    fn invalid_fraction_is_exact() {
        let mut spec = SceneSpec::plane(10, 10, 0.0, 0.0, 1.0);
        spec.invalid_frac = 0.3;
        let scene = generate::<f64>(&spec).unwrap();
        assert_eq!(scene.observed.valid_count(), 70);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SceneSpec::plane(8, 8, 0.0, 0.0, 1.0);
        spec.outlier_frac = 1.5;
        assert!(generate::<f64>(&spec).is_err());
        let negative = SceneSpec::plane(8, 8, -1.0, 0.0, 1.0);
        assert!(negative.validate().is_err());
        let mut overlap = SceneSpec::plane(8, 8, 0.0, 0.0, 1.0);
        overlap.pieces.push(overlap.pieces[0]);
        assert!(overlap.validate().is_err());
        let gap = SceneSpec {
            pieces: vec![Piece {
                region: Region::Rect { x0: 0, y0: 0, x1: 4, y1: 8 },
                surface: Surface::Affine { a: 0.0, b: 0.0, c: 1.0 },
            }],
            ..SceneSpec::plane(8, 8, 0.0, 0.0, 1.0)
        };
        assert!(gap.validate().is_err());
    }

    #[test]
    fn landmarks_sit_on_the_truth() {
        let mut spec = SceneSpec::plane(40, 30, 0.002, 0.001, 0.3);
        spec.landmark_spacing = Some(10);
        let scene = generate::<f64>(&spec).unwrap();
        assert!(!scene.landmarks.is_empty());
        for l in &scene.landmarks {
            let expected = 0.002 * l.u[0] + 0.001 * l.u[1] + 0.3;
            assert!((l.z.unwrap() - expected).abs() < 1e-15);
            assert!(l.u[0] >= 0.0 && l.u[0] <= 39.0 && l.u[1] >= 0.0 && l.u[1] <= 29.0);
        }
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let mesh = crate::mesh2d::triangulate::<f64>(&[], (4, 4), None).unwrap();
        let a = crate::barycentric::build_dense_interpolator(&mesh).unwrap();
        let b = vec![0.5; a.n_rows()];
        let err = oracle_minimize(&mesh, &[0, 1, 2, 3], &a, &b, 1.0, OracleGrid::default()).unwrap_err();
        assert!(matches!(err, Error::OracleScaleExceeded { free: 4 }));
    }
}
