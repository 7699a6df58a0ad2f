//! Symmetry-reduced solvers for conformal geometry on asymptotically
//! hyperbolic manifolds with an inner boundary.
//!
//! Everything is radial: a manifold is a uniform grid in the geodesic
//! distance `t` from the inner boundary, and every PDE becomes a two-point
//! boundary-value problem on that grid.
//!
//! * [`geometry`]: model manifolds and conformal-change formulas
//! * [`grid`]: grid functions, weighted norms, decay fits
//! * [`linsolve`]: the linear Robin problem `-Δu + Au = g`
//! * [`monotone`]: sub/super-solution iteration
//! * [`scalarcurv`]: prescribed scalar curvature
//! * [`lichnerowicz`]: the Lichnerowicz equation with horizon boundary data
//! * [`ttensor`]: radial transverse-traceless tensors

pub mod geometry;
pub mod grid;
pub mod lichnerowicz;
pub mod linsolve;
pub mod monotone;
pub mod ode;
pub mod quad;
pub mod scalarcurv;
pub mod ttensor;

mod error;

pub use error::{Error, Result};
pub use geometry::{GeometryKind, RadialGeometry};
pub use grid::{DecayFit, GridFunction};

/// Conformal exponent `κ = 4/(n-2)`.
pub fn kappa(n: usize) -> f64 {
    4.0 / (n as f64 - 2.0)
}

/// Coefficient `4(n-1)/(n-2)` in front of the Laplacian in the conformal
/// Laplacian.
pub fn conformal_laplacian_coeff(n: usize) -> f64 {
    let n = n as f64;
    4.0 * (n - 1.0) / (n - 2.0)
}
