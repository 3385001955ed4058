//! Geometric control barrier functions on manifolds.
//!
//! Closed-form CBF-QP and smooth half-Sontag safety filters for control-affine
//! systems in a global trivialization, plus a Riemannian backstepping
//! construction that lifts configuration constraints to CBFs for underactuated
//! mechanical systems. Ships with an underactuated satellite on SO(3) as the
//! worked instance and a simulation front end.

pub mod checks;
pub mod error;
pub mod integrators;
pub mod manifold;
pub mod mechanical;
pub mod satellite;
pub mod scalar_filters;
pub mod scenario;
pub mod so3;

pub use error::{Error, Result};
pub use scalar_filters::AlphaSpec;

pub mod safety_filters;
