//! Numerics for subcritical interpolation inequalities on the unit sphere.
//!
//! The library works with zonal (axially symmetric) functions on S^d,
//! reduced to functions of z = cos(geodesic colatitude) on [-1, 1] with the
//! normalized measure nu_d(z) dz proportional to (1 - z^2)^(d/2 - 1) dz.
//! On top of that discretization it provides:
//!
//! * [`ultraspherical`]: Gauss-Jacobi collocation grids, quadrature and
//!   spectral differentiation;
//! * [`functionals`]: the three inequality families, their quotients,
//!   deficits and Euler-Lagrange machinery;
//! * [`optimize`]: quotient minimization, branch continuation in the
//!   bifurcation parameter and symmetry-breaking threshold detection;
//! * [`flow`]: the nonlinear diffusion flow and carre-du-champ estimates
//!   that certify the inequalities;
//! * [`euclidean`]: the large-parameter (Euclidean) limit constants from
//!   radial ground states on R^d.

pub mod error;
pub mod euclidean;
pub mod flow;
pub mod functionals;
pub mod optimize;
pub mod ultraspherical;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
