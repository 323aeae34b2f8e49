//! Solver and verification toolkit for the one-dimensional partially
//! congested Navier-Stokes free-boundary problem near its traveling wave.

pub mod diagnostics;
pub mod discrete;
pub mod error;
pub mod freeboundary;
pub mod parabolic;
pub mod perturbation;
pub mod problem;
pub mod profiles;

pub use error::{Error, Result};
pub use problem::{derive_speed, Field, Grid, PhysicalParams};

/// 17 significant digits, so that printed values round-trip exactly.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}
