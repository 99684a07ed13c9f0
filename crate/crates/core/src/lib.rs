//! Incremental thermoelectroelasticity superposed on finite static bias
//! fields: effective tangents from a nonlinear free energy, a structured-grid
//! solver for the incremental field equations, and residual checks for the
//! energy, variational and reciprocity identities of the linearised theory.

pub mod bias;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod material;
pub mod sampling;
pub mod solver;
pub mod tensor;
pub mod theorems;

pub use error::{Error, Result};
