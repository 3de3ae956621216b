//! Numerical laboratory for transport enhancement by periodic incompressible
//! flows on the 2D/3D torus: effective diffusivities from the corrector cell
//! problem, minimal reaction front speeds from the principal-eigenvalue
//! variational principle, a growth-rate classifier per propagation direction,
//! and a direct strip simulation as an independent speed check.

pub mod criterion;
pub mod error;
pub mod field;
pub mod flows;
pub mod frontspeed;
pub mod grid;
pub mod homogenize;
pub mod krylov;
pub mod numeric;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{mean_inner, reduce, unit_direction, Reduction, ScalarField, VectorField};
pub use grid::TorusGrid;
pub use spectral::{Advection, DealiasedMultiplier, Spectral};
