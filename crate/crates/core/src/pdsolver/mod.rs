//! First-order primal-dual fitting of vertex inverse depths and gradients.
//!
//! The objective
//!
//! ```text
//! sum_e |D_e x|_1 + lambda * ( sum_v |xi_v - z_v| + sum_d |a_d xi - b_d| )
//! ```
//!
//! is split into a dual part over `K x = (D x, lambda A xi)`, with one dual
//! 3-vector per edge and one dual scalar per valid pixel, and a primal part
//! holding the tracking term. Each iteration performs a projected dual ascent,
//! a primal descent through the shrinkage resolvent and an extrapolation step.

mod energy;
mod lsq;
mod norm;
mod resolvent;

use std::time::{Duration, Instant};

pub use energy::{energy, EnergyBreakdown};
pub use lsq::{duality_gap_check, ls_fit, LS_REL_TOL};
pub use norm::{estimate_operator_norm, NORM_SAFETY};
pub use resolvent::{project_edge_duals, project_pixel_duals, project_unit, resolvent_fstar, resolvent_g};

use crate::barycentric::{build_interpolator, SparseInterpolator};
use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::mesh2d::{check_len, Mesh2D};
use crate::nltgv::{apply_d_adjoint_into, apply_d_to};
use crate::scalar::Scalar;

/// Energy is sampled every this many iterations for diagnostics and stopping.
pub const ENERGY_STRIDE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Weight of the data terms; zero gives a pure smoothing run.
    pub lambda: T,
    /// Dual step, ignored when `auto_steps` is set.
    pub sigma: T,
    /// Primal step, ignored when `auto_steps` is set.
    pub tau: T,
    /// Extrapolation factor in `[0, 1]`.
    pub theta: T,
    pub max_iters: usize,
    /// Stop once the energy changes by less than this fraction over
    /// [`ENERGY_STRIDE`] iterations. Zero or negative runs the full budget.
    pub energy_rel_tol: T,
    /// Derive `sigma = tau = 1 / L` from [`estimate_operator_norm`].
    pub auto_steps: bool,
    /// Keep every `w` at its initial value (zero) and optimize `xi` only.
    pub freeze_normals: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            lambda: T::of(0.1),
            sigma: T::of(0.1),
            tau: T::of(0.1),
            theta: T::one(),
            max_iters: 200,
            energy_rel_tol: T::of(1e-5),
            auto_steps: true,
            freeze_normals: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// The same settings in another precision.
    pub fn cast<U: Scalar>(&self) -> SolverConfig<U> {
        let c = |v: T| U::of(v.to_f64_lossy());
        SolverConfig {
            lambda: c(self.lambda),
            sigma: c(self.sigma),
            tau: c(self.tau),
            theta: c(self.theta),
            max_iters: self.max_iters,
            energy_rel_tol: c(self.energy_rel_tol),
            auto_steps: self.auto_steps,
            freeze_normals: self.freeze_normals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda >= T::zero() && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !self.auto_steps && !(self.sigma > T::zero() && self.tau > T::zero()) {
            return bad(format!("sigma and tau must be > 0, got {} and {}", self.sigma, self.tau));
        }
        if !(self.theta >= T::zero() && self.theta <= T::one()) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        Ok(())
    }
}

/// Dual variables: one 3-vector per edge and one scalar per valid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState<T> {
    pub q: Vec<[T; 3]>,
    pub p: Vec<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn zeros(n_edges: usize, n_pixels: usize) -> Self {
        DualState {
            q: vec![[T::zero(); 3]; n_edges],
            p: vec![T::zero(); n_pixels],
        }
    }

    /// True when every component lies in `[-1, 1]`.
    pub fn is_feasible(&self) -> bool {
        let inside = |x: T| x.abs() <= T::one();
        self.q.iter().flatten().all(|&x| inside(x)) && self.p.iter().all(|&x| inside(x))
    }
}

/// Iteration state of one primal-dual run over a fixed mesh and interpolator.
pub struct PrimalDual<'a, T: Scalar> {
    mesh: &'a Mesh2D<T>,
    a: &'a SparseInterpolator<T>,
    b: &'a [T],
    z: Vec<Option<T>>,
    lambda: T,
    sigma: T,
    tau: T,
    theta: T,
    freeze_normals: bool,
    xi: Vec<T>,
    w: Vec<[T; 2]>,
    xi_bar: Vec<T>,
    w_bar: Vec<[T; 2]>,
    duals: DualState<T>,
    dq: Vec<[T; 3]>,
    ax: Vec<T>,
    at_p: Vec<T>,
    dt_xi: Vec<T>,
    dt_w: Vec<[T; 2]>,
    iteration: usize,
}

impl<'a, T: Scalar> PrimalDual<'a, T> {
    /// Starts from the mesh's current `(xi, w)` with the given duals.
    ///
    /// `sigma` and `tau` are taken from `config` as given; use
    /// [`resolve_steps`] first to apply the automatic rule.
    pub fn new(
        mesh: &'a Mesh2D<T>,
        a: &'a SparseInterpolator<T>,
        b: &'a [T],
        duals: DualState<T>,
        config: &SolverConfig<T>,
    ) -> Result<Self> {
        check_len("vertex count", mesh.num_vertices(), a.n_vertices())?;
        check_len("measurements", a.n_rows(), b.len())?;
        check_len("edge duals", mesh.edges().len(), duals.q.len())?;
        check_len("pixel duals", a.n_rows(), duals.p.len())?;
        let n = mesh.num_vertices();
        let xi = mesh.xi();
        let w = mesh.w();
        Ok(PrimalDual {
            mesh,
            a,
            b,
            z: mesh.vertices().iter().map(|v| v.z).collect(),
            lambda: config.lambda,
            sigma: config.sigma,
            tau: config.tau,
            theta: config.theta,
            freeze_normals: config.freeze_normals,
            xi_bar: xi.clone(),
            w_bar: w.clone(),
            xi,
            w,
            duals,
            dq: vec![[T::zero(); 3]; mesh.edges().len()],
            ax: vec![T::zero(); b.len()],
            at_p: vec![T::zero(); n],
            dt_xi: vec![T::zero(); n],
            dt_w: vec![[T::zero(); 2]; n],
            iteration: 0,
        })
    }

    /// One full cycle: dual ascent, primal descent, extrapolation.
    pub fn iterate(&mut self) -> Result<()> {
        self.dual_ascent();
        self.primal_descent();
        self.iteration += 1;
        let finite = self.xi.iter().all(|x| x.is_finite())
            && self.w.iter().all(|g| g[0].is_finite() && g[1].is_finite());
        if !finite {
            return Err(Error::Divergence {
                iteration: self.iteration,
            });
        }
        Ok(())
    }

    /// Dual ascent on `q` and `p` at the extrapolated state. The pixel pass
    /// also accumulates `A^T p` for the following primal step, adding rows in
    /// raster order just like the column gather of the interpolator.
    pub fn dual_ascent(&mut self) {
        apply_d_to(self.mesh, &self.xi_bar, &self.w_bar, &mut self.dq);
        for (q, d) in self.duals.q.iter_mut().zip(&self.dq) {
            for k in 0..3 {
                q[k] += self.sigma * d[k];
            }
        }
        project_edge_duals(&mut self.duals.q);

        let sl = self.sigma * self.lambda;
        let xi_bar = &self.xi_bar;
        let at_p = &mut self.at_p;
        at_p.fill(T::zero());
        let rows = self.a.packed_rows();
        for ((row, p), &b) in rows.iter().zip(self.duals.p.iter_mut()).zip(self.b) {
            let next = project_unit(*p + sl * row.eval(xi_bar) - sl * b);
            *p = next;
            for k in 0..3 {
                let v = row.vertices[k] as usize;
                at_p[v] = at_p[v] + row.weights[k] * next;
            }
        }
    }

    fn primal_descent(&mut self) {
        apply_d_adjoint_into(self.mesh, &self.duals.q, &mut self.dt_xi, &mut self.dt_w);
        let (tau, lambda, theta) = (self.tau, self.lambda, self.theta);
        for v in 0..self.xi.len() {
            let prev = self.xi[v];
            let step = prev - tau * self.dt_xi[v] - tau * lambda * self.at_p[v];
            let next = resolvent_g(step, self.z[v], tau, lambda);
            self.xi[v] = next;
            self.xi_bar[v] = next + theta * (next - prev);
            if !self.freeze_normals {
                for k in 0..2 {
                    let prev = self.w[v][k];
                    let next = prev - tau * self.dt_w[v][k];
                    self.w[v][k] = next;
                    self.w_bar[v][k] = next + theta * (next - prev);
                }
            }
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn xi(&self) -> &[T] {
        &self.xi
    }

    pub fn w(&self) -> &[[T; 2]] {
        &self.w
    }

    pub fn duals(&self) -> &DualState<T> {
        &self.duals
    }

    pub fn energy(&mut self) -> EnergyBreakdown<T> {
        energy::energy_of(self.mesh, self.a, self.b, self.lambda, &self.xi, &self.w, &mut self.ax)
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<[T; 2]>, DualState<T>) {
        (self.xi, self.w, self.duals)
    }
}

/// Replaces `sigma` and `tau` by `1 / L` when `auto_steps` is set.
/// Returns the updated config and the norm estimate, if one was made.
pub fn resolve_steps<T: Scalar>(
    mesh: &Mesh2D<T>,
    a: &SparseInterpolator<T>,
    config: &SolverConfig<T>,
) -> Result<(SolverConfig<T>, Option<T>)> {
    if !config.auto_steps {
        return Ok((*config, None));
    }
    let l = estimate_operator_norm(mesh, a, config.lambda)?;
    let step = l.recip();
    Ok((
        SolverConfig {
            sigma: step,
            tau: step,
            ..*config
        },
        Some(l),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics<T> {
    pub iterations: usize,
    pub converged: bool,
    pub energy: EnergyBreakdown<T>,
    /// `(iteration, total energy)` sampled every [`ENERGY_STRIDE`] iterations,
    /// starting with the initial state.
    pub trajectory: Vec<(usize, T)>,
    pub sigma: T,
    pub tau: T,
    pub operator_norm: Option<T>,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct Fit<T: Scalar> {
    pub mesh: Mesh2D<T>,
    pub duals: DualState<T>,
    pub diagnostics: Diagnostics<T>,
}

fn median<T: Scalar>(values: &mut [T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let cmp = |x: &T, y: &T| x.partial_cmp(y).expect("finite measurements");
    let m = values.len() / 2;
    let odd = values.len() % 2 == 1;
    let (lower, upper, _) = values.select_nth_unstable_by(m, cmp);
    let upper = *upper;
    Some(if odd {
        upper
    } else {
        let below = lower.iter().copied().max_by(cmp).expect("even length above zero");
        (below + upper) / T::of(2.0)
    })
}

/// Initial inverse depths: the landmark value where present, else the median
/// measurement over the vertex's incident triangles, else the global median.
pub fn initial_inverse_depths<T: Scalar>(mesh: &Mesh2D<T>, a: &SparseInterpolator<T>, b: &[T]) -> Vec<T> {
    let global = median(&mut b.to_vec()).unwrap_or(T::one());
    let mut local = Vec::new();
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(v, vs)| {
            vs.z.unwrap_or_else(|| {
                local.clear();
                local.extend(a.column(v).iter().map(|&(r, _)| b[r]));
                median(&mut local).unwrap_or(global)
            })
        })
        .collect()
}

/// Builds the interpolator for `grid` and runs [`solve_with`].
pub fn solve<T: Scalar>(mesh: &Mesh2D<T>, grid: &DepthGrid<T>, config: &SolverConfig<T>) -> Result<Fit<T>> {
    let start = Instant::now();
    let a = build_interpolator(mesh, grid)?;
    let b = grid.valid_values();
    let mut fit = solve_with(mesh, &a, &b, config)?;
    fit.diagnostics.wall_time = start.elapsed();
    Ok(fit)
}

/// Initializes the state, resolves the step sizes and iterates until the
/// energy stalls or the budget is spent.
pub fn solve_with<T: Scalar>(
    mesh: &Mesh2D<T>,
    a: &SparseInterpolator<T>,
    b: &[T],
    config: &SolverConfig<T>,
) -> Result<Fit<T>> {
    let start = Instant::now();
    config.validate()?;
    check_len("measurements", a.n_rows(), b.len())?;
    if mesh.num_vertices() == 0 {
        return Err(Error::EmptyProblem("mesh has no vertices".into()));
    }
    if a.n_rows() == 0 && mesh.vertices().iter().any(|v| v.z.is_none()) {
        return Err(Error::EmptyProblem(
            "no valid pixels and some vertices carry no landmark depth".into(),
        ));
    }

    let mut init = mesh.clone();
    init.set_xi(&initial_inverse_depths(mesh, a, b))?;
    init.set_w(&vec![[T::zero(); 2]; mesh.num_vertices()])?;
    let (config, operator_norm) = resolve_steps(&init, a, config)?;

    let duals = DualState::zeros(init.edges().len(), a.n_rows());
    let mut pd = PrimalDual::new(&init, a, b, duals, &config)?;
    let mut trajectory = vec![(0, pd.energy().total)];
    let mut converged = false;
    while pd.iteration() < config.max_iters {
        pd.iterate()?;
        let it = pd.iteration();
        if it % ENERGY_STRIDE == 0 {
            let e = pd.energy().total;
            if !e.is_finite() {
                return Err(Error::Divergence { iteration: it });
            }
            let prev = trajectory.last().map(|&(_, p)| p).unwrap_or(e);
            trajectory.push((it, e));
            if config.energy_rel_tol > T::zero() {
                let delta = (e - prev).abs();
                if delta == T::zero() || delta < config.energy_rel_tol * prev.abs() {
                    converged = true;
                    break;
                }
            }
        }
    }
    let final_energy = pd.energy();
    let iterations = pd.iteration();
    if trajectory.last().map(|&(i, _)| i) != Some(iterations) {
        trajectory.push((iterations, final_energy.total));
    }
    let (xi, w, duals) = pd.into_parts();
    let mut fitted = init.clone();
    fitted.set_xi(&xi)?;
    fitted.set_w(&w)?;
    Ok(Fit {
        mesh: fitted,
        duals,
        diagnostics: Diagnostics {
            iterations,
            converged,
            energy: final_energy,
            trajectory,
            sigma: config.sigma,
            tau: config.tau,
            operator_norm,
            wall_time: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barycentric::build_dense_interpolator;
    use crate::mesh2d::triangulate;

    #[test]
    fn flat_matching_state_is_a_fixed_point() {
        let mut mesh = triangulate::<f64>(&[], (12, 9), Some(5)).unwrap();
        let n = mesh.num_vertices();
        mesh.set_xi(&vec![0.5; n]).unwrap();
        let a = build_dense_interpolator(&mesh).unwrap();
        let b = vec![0.5; a.n_rows()];
        let cfg = SolverConfig {
            sigma: 0.2,
            tau: 0.2,
            auto_steps: false,
            ..SolverConfig::default()
        };
        let duals = DualState::zeros(mesh.edges().len(), a.n_rows());
        let mut pd = PrimalDual::new(&mesh, &a, &b, duals, &cfg).unwrap();
        pd.iterate().unwrap();
        assert!(pd.xi().iter().all(|&x| x == 0.5));
        assert!(pd.w().iter().all(|g| g == &[0.0, 0.0]));
        assert!(pd.duals().is_feasible());
    }

    #[test]
    fn fused_pixel_pass_matches_separate_steps() {
        let mut mesh = triangulate::<f64>(&[], (17, 11), Some(4)).unwrap();
        let n = mesh.num_vertices();
        let xi: Vec<f64> = (0..n).map(|v| 0.3 + 0.01 * v as f64).collect();
        mesh.set_xi(&xi).unwrap();
        let a = build_dense_interpolator(&mesh).unwrap();
        let b: Vec<f64> = (0..a.n_rows()).map(|j| 0.2 + (j % 7) as f64 * 0.1).collect();
        let p0: Vec<f64> = (0..a.n_rows()).map(|j| ((j % 5) as f64 - 2.0) * 0.3).collect();
        let cfg = SolverConfig {
            sigma: 0.7,
            tau: 0.2,
            lambda: 1.3,
            auto_steps: false,
            ..SolverConfig::default()
        };
        let duals = DualState {
            q: vec![[0.0; 3]; mesh.edges().len()],
            p: p0.clone(),
        };
        let mut pd = PrimalDual::new(&mesh, &a, &b, duals, &cfg).unwrap();
        pd.dual_ascent();

        let sl = 0.7 * 1.3;
        let mut p: Vec<f64> = a.apply(&xi).unwrap().iter().zip(&p0).map(|(ax, p)| p + sl * ax).collect();
        project_pixel_duals(&mut p, sl, &b);
        assert_eq!(pd.duals().p, p);
        assert_eq!(pd.at_p, a.apply_adjoint(&p).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.lambda = 0.0;
        assert!(cfg.validate().is_ok());
        cfg.theta = 1.5;
        assert!(cfg.validate().is_err());
        let manual = SolverConfig::<f64> {
            auto_steps: false,
            sigma: 0.0,
            ..SolverConfig::default()
        };
        assert!(manual.validate().is_err());
    }

    #[test]
    fn empty_problem_is_rejected() {
        let mesh = triangulate::<f64>(&[], (4, 4), None).unwrap();
        let grid = DepthGrid::new(4, 4, vec![0.0; 16], vec![false; 16]).unwrap();
        let err = solve(&mesh, &grid, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyProblem(_)));
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&mut []), None);
    }

    #[test]
    fn initialization_prefers_landmarks() {
        let mut mesh = triangulate::<f64>(&[], (6, 6), None).unwrap();
        mesh.set_z(0, Some(0.9));
        let grid = DepthGrid::from_values(6, 6, vec![0.4; 36]).unwrap();
        let a = build_interpolator(&mesh, &grid).unwrap();
        let init = initial_inverse_depths(&mesh, &a, &grid.valid_values());
        assert_eq!(init[0], 0.9);
        assert!(init[1..].iter().all(|&x| x == 0.4));
    }

    #[test]
    fn single_precision_solve_runs() {
        let mesh = triangulate::<f32>(&[], (16, 16), Some(5)).unwrap();
        let values: Vec<f32> = (0..256).map(|k| 0.5 + 0.01 * (k % 16) as f32).collect();
        let grid = DepthGrid::from_values(16, 16, values).unwrap();
        let fit = solve(&mesh, &grid, &SolverConfig::default()).unwrap();
        assert!(fit.diagnostics.energy.total.is_finite());
        assert!(fit.duals.is_feasible());
    }
}
