//! Flatness-based linearization toolkit for discrete-time nonlinear systems.

pub mod error;
pub mod expr;
pub mod feasibility;
pub mod feedback;
pub mod kappa;
pub mod linalg;
pub mod multi_index;
pub mod plot;
pub mod sampling;
pub mod scalar;
pub mod shift;
pub mod sim;
pub mod system;
pub mod tracking;
pub mod zoo;

pub use error::{Error, Result};
pub use expr::{Assignment, Block, Expr, JacobianTape, ShiftedVar, Tape};
pub use multi_index::MultiIndex;
pub use scalar::Scalar;

/// Scalar type used by the control-level APIs.
pub type Real = f64;
