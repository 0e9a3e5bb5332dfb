//! Ghost point diffusion maps: kernel estimators of elliptic operators on point clouds
//! sampled from manifolds with boundary, with solvers for boundary-value and eigenvalue problems.

pub mod boundary_geometry;
pub mod eig_solver;
pub mod error;
pub mod experiments;
pub mod gpdm;
pub mod linalg;
pub mod manifolds;
pub mod operators;
pub mod pde_solver;
pub mod pointcloud;
pub mod sparse;

pub use error::{GpdmError, Result};
