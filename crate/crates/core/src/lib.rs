//! Finite element reconstruction of a reaction coefficient from boundary
//! Cauchy data.
//!
//! The model problem is `-div(alpha grad u) + beta u = f` on `(-1,1)^2` with
//! Robin/Neumann data on the boundary. Given a flux `j` on the whole boundary and
//! the trace `g` of the state on an observation part, `beta` is recovered by
//! minimizing the misfit between the Neumann and the mixed problem with Tikhonov
//! regularization, using P1 elements on a uniform triangulation.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::approx_constant, clippy::needless_range_loop))]

pub mod error;
pub mod experiments;
pub mod fem;
pub mod forward;
pub mod inverse;
pub mod mesh;
pub mod sparse;

pub use error::{Error, Result};
pub use fem::{EdgeFlux, FemSpace, MatrixCoefficient, NodalField, ScalarCoefficient};
pub use forward::{CauchyData, Coefficients, ForwardModel};
pub use inverse::{AlgorithmParams, GradientRepresentation, InverseProblem, InversionResult, MeasurementSet, SolverConfig};
pub use mesh::{build_square_mesh, BoundaryRegion, Mesh, Point, Side};
