//! Command-line front end (`drm`) for the discrete Riemann matrix library.

mod app;
pub mod levels;
pub mod render;

pub use app::{run, EXIT_ARGUMENT, EXIT_NUMERICAL, EXIT_RESOURCE};
