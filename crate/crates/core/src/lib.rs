//! Fit a smooth triangular mesh to a single inverse-depth map and sparse
//! landmarks by minimizing an L1 data term plus a discrete NLTGV² smoothness
//! term with a first-order primal-dual method.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the precision.

pub mod barycentric;
pub mod config;
pub mod depthio;
pub mod error;
pub mod eval;
pub mod grid;
pub mod mesh2d;
pub mod nltgv;
pub mod pdsolver;
pub mod scalar;
pub mod synth;

pub use barycentric::{build_dense_interpolator, build_interpolator, locate, InterpRow, SparseInterpolator};
pub use config::RunConfig;
pub use depthio::{read_depth, read_landmarks, write_depth, write_mesh, DepthKind, Intrinsics, MeshFile, MeshKind};
pub use error::{Error, Result};
pub use eval::{accurate_density, run_ablation, run_fit, EvalReport};
pub use grid::DepthGrid;
pub use mesh2d::{edge_weights, triangulate, Edge, Landmark, Mesh2D, VertexState};
pub use pdsolver::{solve, solve_with, DualState, EnergyBreakdown, Fit, PrimalDual, SolverConfig};
pub use scalar::Scalar;

pub type Mesh64 = Mesh2D<f64>;
pub type Mesh32 = Mesh2D<f32>;
pub type DepthGrid64 = DepthGrid<f64>;
pub type DepthGrid32 = DepthGrid<f32>;
pub type Interpolator64 = SparseInterpolator<f64>;
pub type Interpolator32 = SparseInterpolator<f32>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type Landmark64 = Landmark<f64>;
pub type Landmark32 = Landmark<f32>;
