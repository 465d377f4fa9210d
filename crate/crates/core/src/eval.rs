//! Accuracy metric, run reports and the end-to-end pipelines behind the CLI.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::barycentric::{build_dense_interpolator, build_interpolator};
use crate::config::RunConfig;
use crate::depthio::{self, DepthKind, Intrinsics, MeshKind};
use crate::error::{Error, Result};
use crate::grid::DepthGrid;
use crate::mesh2d::{triangulate, Landmark, Mesh2D};
use crate::pdsolver::{resolve_steps, solve, DualState, EnergyBreakdown, Fit, PrimalDual, SolverConfig};
use crate::scalar::Scalar;
use crate::synth::{generate, SceneSpec};

/// Version written at the top of every report and ablation table.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Per-pixel inverse depth of the fitted mesh over the whole image.
pub fn render_inverse_depth<T: Scalar>(mesh: &Mesh2D<T>) -> Result<Vec<T>> {
    build_dense_interpolator(mesh)?.apply(&mesh.xi())
}

/// The fitted mesh as an inverse-depth grid, valid wherever the estimate is
/// finite and positive.
pub fn render_grid<T: Scalar>(mesh: &Mesh2D<T>) -> Result<DepthGrid<T>> {
    DepthGrid::from_values(mesh.width(), mesh.height(), render_inverse_depth(mesh)?)
}

#[inline]
fn is_accurate(estimate: f64, truth: f64, rel_tol: f64) -> bool {
    (estimate - truth).abs() <= rel_tol * truth
}

/// Fraction of valid ground-truth pixels whose estimate lies within
/// `rel_tol * truth`. `estimated` is indexed like `truth`; non-finite entries
/// mark pixels without an estimate and count as inaccurate.
pub fn accurate_density<T: Scalar>(estimated: &[T], truth: &DepthGrid<T>, rel_tol: f64) -> Result<f64> {
    let r = residuals(estimated, truth)?;
    density_from_residuals(&r, rel_tol)
}

/// One ground-truth-valid pixel: raster position, estimate and truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub x: usize,
    pub y: usize,
    pub estimate: f64,
    pub truth: f64,
}

pub fn residuals<T: Scalar>(estimated: &[T], truth: &DepthGrid<T>) -> Result<Vec<Residual>> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "estimated pixels",
            expected: truth.len(),
            got: estimated.len(),
        });
    }
    let w = truth.width();
    Ok((0..truth.len())
        .filter_map(|k| {
            truth.get(k).map(|t| Residual {
                x: k % w,
                y: k / w,
                estimate: estimated[k].to_f64_lossy(),
                truth: t.to_f64_lossy(),
            })
        })
        .collect())
}

pub fn density_from_residuals(residuals: &[Residual], rel_tol: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::NoValidTruth);
    }
    let good = residuals
        .iter()
        .filter(|r| r.estimate.is_finite() && is_accurate(r.estimate, r.truth, rel_tol))
        .count();
    Ok(good as f64 / residuals.len() as f64)
}

/// CSV `x,y,estimate,truth` with values printed so they parse back exactly.
pub fn write_residuals(path: &Path, residuals: &[Residual]) -> Result<()> {
    let mut out = String::from("x,y,estimate,truth\n");
    for r in residuals {
        writeln!(out, "{},{},{:?},{:?}", r.x, r.y, r.estimate, r.truth).expect("writing to a String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_residuals(path: &Path) -> Result<Vec<Residual>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(k + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(k + 1, format!("bad index {s:?}")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(k + 1, format!("bad number {s:?}")));
        out.push(Residual {
            x: int(f[0])?,
            y: int(f[1])?,
            estimate: num(f[2])?,
            truth: num(f[3])?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub width: usize,
    pub height: usize,
    pub valid_pixels: usize,
    pub landmarks: usize,
    pub rejected_landmarks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub lambda: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub max_iters: usize,
    pub energy_rel_tol: f64,
    pub auto_steps: bool,
    pub freeze_normals: bool,
    /// Zero when no Steiner grid was added.
    pub steiner: usize,
}

impl ConfigEcho {
    pub fn new(solver: &SolverConfig<f64>, steiner: Option<usize>) -> Self {
        ConfigEcho {
            lambda: solver.lambda,
            sigma: solver.sigma,
            tau: solver.tau,
            theta: solver.theta,
            max_iters: solver.max_iters,
            energy_rel_tol: solver.energy_rel_tol,
            auto_steps: solver.auto_steps,
            freeze_normals: solver.freeze_normals,
            steiner: steiner.unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub steiner_vertices: usize,
}

impl MeshStats {
    pub fn of<T: Scalar>(mesh: &Mesh2D<T>) -> Self {
        MeshStats {
            vertices: mesh.num_vertices(),
            edges: mesh.edges().len(),
            faces: mesh.triangles().len(),
            steiner_vertices: mesh.vertices().iter().filter(|v| v.is_steiner).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub converged: bool,
    pub sigma: f64,
    pub tau: f64,
    pub operator_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub rel_tol: f64,
    /// Accurate fraction for each evaluated frame.
    pub per_frame: Vec<f64>,
    pub mean_accurate_density: f64,
}

impl Accuracy {
    pub fn from_frames(rel_tol: f64, per_frame: Vec<f64>) -> Self {
        let mean = per_frame.iter().sum::<f64>() / per_frame.len().max(1) as f64;
        Accuracy {
            rel_tol,
            per_frame,
            mean_accurate_density: mean,
        }
    }
}

/// Output of scoring standalone depth maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub format_version: u32,
    pub accuracy: Accuracy,
}

impl AccuracyReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are TOML-representable")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: f64,
}

/// Everything about one fit, serialized as TOML with a fixed field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub input: InputInfo,
    pub config: ConfigEcho,
    pub mesh: MeshStats,
    pub solver: SolverStats,
    pub energy: EnergyBreakdown<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<Accuracy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are TOML-representable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("report: {e}")))
    }

    /// The report minus wall-clock timing, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        EvalReport {
            timing: None,
            ..self.clone()
        }
    }
}

fn energy_f64<T: Scalar>(e: &EnergyBreakdown<T>) -> EnergyBreakdown<f64> {
    EnergyBreakdown {
        total: e.total.to_f64_lossy(),
        smooth: e.smooth.to_f64_lossy(),
        depth: e.depth.to_f64_lossy(),
        tracking: e.tracking.to_f64_lossy(),
    }
}

pub fn build_report<T: Scalar>(
    grid: &DepthGrid<T>,
    landmarks: usize,
    rejected_landmarks: usize,
    config: &RunConfig,
    fit: &Fit<T>,
    accuracy: Option<Accuracy>,
) -> EvalReport {
    let d = &fit.diagnostics;
    EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        input: InputInfo {
            width: grid.width(),
            height: grid.height(),
            valid_pixels: grid.valid_count(),
            landmarks,
            rejected_landmarks,
        },
        config: ConfigEcho::new(&config.solver, config.steiner),
        mesh: MeshStats::of(&fit.mesh),
        solver: SolverStats {
            iterations: d.iterations,
            converged: d.converged,
            sigma: d.sigma.to_f64_lossy(),
            tau: d.tau.to_f64_lossy(),
            operator_norm: d.operator_norm.map(|l| l.to_f64_lossy()),
        },
        energy: energy_f64(&d.energy),
        accuracy,
        timing: Some(Timing {
            wall_ms: d.wall_time.as_secs_f64() * 1e3,
        }),
    }
}

/// Triangulates, solves and reports on one inverse-depth grid. With `truth`,
/// the report carries the accuracy of the rendered mesh against it.
pub fn fit_grid<T: Scalar>(
    grid: &DepthGrid<T>,
    landmarks: &[Landmark<T>],
    rejected_landmarks: usize,
    config: &RunConfig,
    truth: Option<&DepthGrid<T>>,
) -> Result<(Fit<T>, EvalReport)> {
    let mesh = triangulate(landmarks, (grid.width(), grid.height()), config.steiner)?;
    let fit = solve(&mesh, grid, &config.solver.cast())?;
    let accuracy = match truth {
        Some(t) => {
            if (t.width(), t.height()) != (grid.width(), grid.height()) {
                return Err(Error::InvalidInput(format!(
                    "truth is {}x{} but the depth map is {}x{}",
                    t.width(),
                    t.height(),
                    grid.width(),
                    grid.height()
                )));
            }
            let est = render_inverse_depth(&fit.mesh)?;
            Some(Accuracy::from_frames(config.rel_tol, vec![accurate_density(&est, t, config.rel_tol)?]))
        }
        None => None,
    };
    let report = build_report(grid, landmarks.len(), rejected_landmarks, config, &fit, accuracy);
    Ok((fit, report))
}

/// File inputs and outputs of [`run_fit`].
#[derive(Clone, Debug)]
pub struct FitRequest {
    pub depth: PathBuf,
    pub landmarks: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub config: RunConfig,
    pub mesh_out: Option<PathBuf>,
    pub mesh_kind: MeshKind,
}

fn load_depth(path: &Path) -> Result<DepthGrid<f64>> {
    depthio::read_depth(path, DepthKind::from_path(path)?)
}

/// Reads the inputs, fits, writes the mesh if requested and returns the report.
pub fn run_fit(req: &FitRequest) -> Result<(Fit<f64>, EvalReport)> {
    let grid = load_depth(&req.depth)?;
    let set = match &req.landmarks {
        Some(p) => depthio::read_landmarks(p)?,
        None => depthio::LandmarkSet {
            landmarks: Vec::new(),
            rejected: 0,
        },
    };
    let truth = req.truth.as_deref().map(load_depth).transpose()?;
    let (fit, report) = fit_grid(&grid, &set.landmarks, set.rejected, &req.config, truth.as_ref())?;
    if let Some(out) = &req.mesh_out {
        let k = req
            .config
            .intrinsics
            .unwrap_or_else(|| Intrinsics::default_for(grid.width(), grid.height()));
        depthio::write_mesh(&fit.mesh, &k, out, req.mesh_kind)?;
    }
    Ok((fit, report))
}

/// One row of a Steiner-spacing ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spacing: usize,
    pub vertices: usize,
    pub iterations: usize,
    pub accurate_density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub format_version: u32,
    pub config: ConfigEcho,
    pub rel_tol: f64,
    pub repeats: usize,
    pub row: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("table fields are TOML-representable")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("spacing,vertices,iterations,accurate_density,time_ms\n");
        for r in &self.row {
            let t = r.time_ms.map(|t| t.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", r.spacing, r.vertices, r.iterations, r.accurate_density, t)
                .expect("writing to a String");
        }
        out
    }

    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.row {
            r.time_ms = None;
        }
        t
    }
}

/// Fits the same generated scene once per Steiner spacing, in the given
/// order. Each spacing is solved `repeats` times, interleaved with the other
/// spacings; the reported time is the fastest solve, the other fields come
/// from the (identical) runs.
pub fn run_ablation(
    spec: &SceneSpec,
    spacings: &[usize],
    config: &RunConfig,
    repeats: usize,
) -> Result<AblationTable> {
    if spacings.is_empty() {
        return Err(Error::InvalidInput("ablation needs at least one Steiner spacing".into()));
    }
    if spacings.contains(&0) {
        return Err(Error::InvalidInput("Steiner spacing must be positive".into()));
    }
    let scene = generate::<f64>(spec)?;
    let solver = config.solver;
    let meshes = spacings
        .iter()
        .map(|&s| triangulate(&scene.landmarks, (spec.width, spec.height), Some(s)))
        .collect::<Result<Vec<_>>>()?;
    // Round-robin over spacings so that machine load drifts hit all of them.
    let mut best = vec![Duration::MAX; spacings.len()];
    let mut fits = Vec::with_capacity(spacings.len());
    for round in 0..repeats.max(1) {
        for (k, mesh) in meshes.iter().enumerate() {
            let fit = solve(mesh, &scene.observed, &solver)?;
            best[k] = best[k].min(fit.diagnostics.wall_time);
            if round == 0 {
                fits.push(fit);
            }
        }
    }
    let mut rows = Vec::with_capacity(spacings.len());
    for ((&s, fit), time) in spacings.iter().zip(&fits).zip(best) {
        let est = render_inverse_depth(&fit.mesh)?;
        rows.push(AblationRow {
            spacing: s,
            vertices: fit.mesh.num_vertices(),
            iterations: fit.diagnostics.iterations,
            accurate_density: accurate_density(&est, &scene.truth, config.rel_tol)?,
            time_ms: Some(time.as_secs_f64() * 1e3),
        });
    }
    Ok(AblationTable {
        format_version: REPORT_FORMAT_VERSION,
        config: ConfigEcho::new(&solver, None),
        rel_tol: config.rel_tol,
        repeats: repeats.max(1),
        row: rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub steiner: usize,
    pub vertices: usize,
    pub valid_pixels: usize,
    pub iterations: usize,
    /// Wall time of the full solve, interpolator construction included.
    pub solve_ms: f64,
    /// Mean wall time of one dual ascent over all edges and pixels.
    pub dual_update_ms: f64,
}

impl BenchReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("bench fields are TOML-representable")
    }
}

/// Times a fixed-budget solve and the dual update alone on a generated scene.
pub fn run_bench(spec: &SceneSpec, steiner: usize, config: &SolverConfig<f64>) -> Result<BenchReport> {
    let scene = generate::<f64>(spec)?;
    let mesh = triangulate(&scene.landmarks, (spec.width, spec.height), Some(steiner).filter(|&s| s > 0))?;
    let fixed = SolverConfig {
        energy_rel_tol: 0.0,
        ..*config
    };
    let fit = solve(&mesh, &scene.observed, &fixed)?;

    let a = build_interpolator(&mesh, &scene.observed)?;
    let b = scene.observed.valid_values();
    let (resolved, _) = resolve_steps(&mesh, &a, &fixed)?;
    let duals = DualState::zeros(mesh.edges().len(), a.n_rows());
    let mut pd = PrimalDual::new(&mesh, &a, &b, duals, &resolved)?;
    let start = Instant::now();
    for _ in 0..fixed.max_iters {
        pd.dual_ascent();
    }
    let dual_ms = start.elapsed().as_secs_f64() * 1e3 / fixed.max_iters as f64;

    Ok(BenchReport {
        format_version: REPORT_FORMAT_VERSION,
        width: spec.width,
        height: spec.height,
        steiner,
        vertices: mesh.num_vertices(),
        valid_pixels: a.n_rows(),
        iterations: fit.diagnostics.iterations,
        solve_ms: fit.diagnostics.wall_time.as_secs_f64() * 1e3,
        dual_update_ms: dual_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> DepthGrid<f64> {
        DepthGrid::from_values(2, 2, vec![1.0, 2.0, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn density_examples() {
        let t = truth();
        assert_eq!(accurate_density(t.values(), &t, 0.1).unwrap(), 1.0);
        let doubled: Vec<f64> = t.values().iter().map(|v| 2.0 * v).collect();
        assert_eq!(accurate_density(&doubled, &t, 0.1).unwrap(), 0.0);
        let half = vec![1.0, 3.0, 0.5, 0.375];
        assert_eq!(accurate_density(&half, &t, 0.1).unwrap(), 0.5);
    }

    #[test]
    fn undefined_estimates_count_as_inaccurate() {
        let t = truth();
        let est = vec![1.0, f64::NAN, 0.5, f64::INFINITY];
        assert_eq!(accurate_density(&est, &t, 0.1).unwrap(), 0.5);
    }

    #[test]
    fn density_ignores_invalid_truth() {
        let t = DepthGrid::new(2, 1, vec![1.0, 0.0], vec![true, false]).unwrap();
        assert_eq!(accurate_density(&[1.05, 9.0], &t, 0.1).unwrap(), 1.0);
        let none = DepthGrid::new(1, 1, vec![0.0], vec![false]).unwrap();
        assert!(matches!(accurate_density(&[1.0], &none, 0.1), Err(Error::NoValidTruth)));
        assert!(accurate_density(&[1.0], &t, 0.1).is_err());
    }

    #[test]
    fn empty_spacing_list_is_rejected() {
        let spec = SceneSpec::plane(16, 16, 0.0, 0.0, 0.5);
        assert!(run_ablation(&spec, &[], &RunConfig::default(), 1).is_err());
        assert!(run_ablation(&spec, &[0], &RunConfig::default(), 1).is_err());
    }
}
