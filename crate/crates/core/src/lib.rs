//! Numerical laboratory for weak-type endpoint estimates of multilinear
//! Calderon-Zygmund operators.
//!
//! The crate discretizes `R^n` on uniform dyadic grids and provides the
//! constructive pieces of the endpoint argument: maximal-function level sets,
//! Whitney decompositions, kernels with condition checkers, operator
//! evaluation on functions and atomic measures, good/bad splittings, ball
//! systems, and inequality ledgers that replay each estimate numerically.

pub mod error;
pub mod decomposition;
pub mod dyadic;
pub mod grid;
pub mod kernel;
pub mod maximal;
pub mod operator;
pub mod verify;

pub use error::{Error, Result};
