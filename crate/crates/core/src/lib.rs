//! Optimization over the weakly Pareto set of convex multiobjective
//! polynomial programs.
//!
//! The pipeline eliminates weights and/or Lagrange multipliers from the KKT
//! description of the weakly Pareto set ([`representation`]), turns the result
//! into one polynomial program ([`reformulate`]), and solves that with the
//! Moment-SOS hierarchy ([`moment`], [`sdp`], [`certify`], [`driver`]).

pub mod mop;
pub mod representation;
pub mod poly;
pub mod reformulate;
pub mod moment;
pub mod sdp;
pub mod certify;
pub mod driver;
pub mod oracle;
pub mod io;
pub mod mtl;

pub use mop::{ConstraintStructure, LinearTermStructure, MopError, MopProblem};
pub use poly::{grlex_basis, Exponent, PolyMatrix, Polynomial};
