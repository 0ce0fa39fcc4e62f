//! Sub-Riemannian structures from polynomial vector fields: exact fiber and
//! bracket-flag computations, grid discretizations of the horizontal
//! Laplacian, spectral and subelliptic diagnostics, and a holonomy-groupoid
//! chart with its convolution algebra.

pub mod cli;
pub mod error;
pub mod exact;
pub mod expr;
pub mod fibers;
pub mod flag;
pub mod grid;
pub mod groupoid;
mod par;
pub mod spec;
pub mod spectral;
pub mod vfield;

pub use error::{Error, Result};
pub use expr::{parse_poly, PolyExpr, Rational};
pub use vfield::{
    divergence_mu, formal_adjoint_apply, horizontal_codifferential, horizontal_gradient, lie_bracket, Axis,
    Chart, LogDensity, VectorField,
};
