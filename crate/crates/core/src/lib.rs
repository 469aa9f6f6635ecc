//! Solvers for a reaction-diffusion equation coupled to a pointwise memory
//! equation,
//!
//! ```text
//! alpha u_t - Delta u + A (u - v) = f        in Omega,   u = 0 on the boundary,
//! beta  v_t + mu v = kappa u + g,
//! ```
//!
//! where `A`, `kappa` and `mu` come from a radial capacity cell problem. The
//! crate covers the cell problem, the memory kernel, the coupled time stepper
//! and a verification harness.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the usual double-precision choice.

pub mod cell_problem;
pub mod cli_io;
pub mod error;
pub mod grid;
pub mod memory_term;
pub mod model_params;
pub mod operator;
pub mod scalar;
pub mod solver;
pub mod source;
pub mod verification;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use memory_term::{MemoryScheme, MemoryState};
pub use model_params::{derive_params, ModelParams, RawParams};
pub use scalar::Scalar;
pub use solver::{CoupledSolver, CoupledState};
pub use source::SourceSpec;
pub use verification::ConvergenceReport;

pub type ModelParams64 = ModelParams<f64>;
pub type Grid64 = Grid<f64>;
pub type Field64 = Field<f64>;
pub type CoupledState64 = CoupledState<f64>;
pub type SourceSpec64 = SourceSpec<f64>;
pub type RunConfig64 = cli_io::RunConfig<f64>;
pub type CellSolution64 = cell_problem::CellSolution<f64>;
pub type ConvergenceReport64 = ConvergenceReport<f64>;

pub type ModelParams32 = ModelParams<f32>;
pub type Field32 = Field<f32>;
