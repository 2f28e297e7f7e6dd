//! Spectral homogenization of periodic linear-elastic composites on
//! anisotropic lattice patterns.
//!
//! The cell problem is discretised in the span of the pattern translates of a
//! generator `f` (Dirichlet kernel, de la Vallée Poussin mean or B-spline).
//! Both the Lippmann–Schwinger fixed point and the variational (projected)
//! form are provided, with the periodised Green operator built from the
//! generator's Fourier coefficients.

pub mod elasticity;
pub mod error;
pub mod field;
pub mod geometry;
pub mod lattice;
pub mod numerics;
pub mod pfft;
pub mod solver;
pub mod translates;

pub use error::{Error, Result};
