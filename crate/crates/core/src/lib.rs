//! Hybridizable discontinuous Galerkin (HDG) solvers for the viscous Burgers'
//! equation `u_t - nu * Laplace(u) + b(u) . grad(u) = f` with
//! `b(u) = (u, ..., u)` and homogeneous Dirichlet data on the unit square or
//! cube.
//!
//! The flux `q = -grad(u)` is approximated by `P_{k-1}` vectors, the scalar by
//! `P_k` and the skeleton trace by `P_l` with `l = k` (HDG-I) or `l = k - 1`
//! (HDG-II). Each implicit step eliminates `(q, u)` element by element and
//! solves a sparse system in the interior-face trace only.
//!
//! All numerical code is generic over [`Scalar`]; the `*64` aliases below fix
//! the scalar to `f64`, which is what the verification suites use.

pub mod basis;
pub mod condensed;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod local;
pub mod mesh;
pub mod mms;
pub mod projection;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod timestep;
mod scalar;

pub use error::{HdgError, Result};
pub use scalar::Scalar;

/// `f64` instances of the main generic types.
pub type Mesh64 = mesh::Mesh<f64>;
pub type HdgSpace64 = space::HdgSpace<f64>;
pub type Discretization64 = local::Discretization<f64>;
pub type FieldState64 = projection::FieldState<f64>;
pub type Trajectory64 = timestep::Trajectory<f64>;
pub type TimeOptions64 = timestep::TimeOptions<f64>;
pub type ManufacturedCase64 = mms::ManufacturedCase<f64>;
pub type RunConfig64 = mms::RunConfig<f64>;
pub type ConvergenceReport64 = mms::ConvergenceReport<f64>;
pub type MeshRun64 = mms::MeshRun<f64>;
pub type StabilityTrace64 = diagnostics::StabilityTrace<f64>;
pub type MonolithicSystem64 = diagnostics::MonolithicSystem<f64>;
