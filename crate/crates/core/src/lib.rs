//! Discrete Riemann matrices of square-tiled translation surfaces.
//!
//! The pipeline is [`surface`] → [`mesh`] → [`assembly`] → [`solver`]: build a
//! polygon with edge gluings, refine it into a bipartite square grid, write
//! the discrete Cauchy–Riemann, periodicity and normalization equations, and
//! solve them by sparse least squares. [`theta`] and [`analysis`] work on the
//! resulting period matrices.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod fixtures;
pub mod mesh;
pub mod rational;
pub mod solver;
pub mod surface;
pub mod theta;

pub use error::{Error, Result};
pub use rational::Rational;
pub use solver::{period_matrix, RiemannMatrix, SolveOptions};
pub use surface::{make_js, make_l, BasisVariant, Family, SurfaceSpec};
