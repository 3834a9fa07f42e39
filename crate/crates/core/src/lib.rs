//! Numerical toolkit for the fractional Laplacian Dirichlet problem on the unit ball.

pub mod error;
pub mod fieldspec;
pub mod interp;
pub mod kernels;
pub mod params;
pub mod potentials;
pub mod quadrature;
pub mod solver;
pub mod weighted_norms;

pub use error::{Error, Result};
pub use params::{sphere_area, ProblemParams};
