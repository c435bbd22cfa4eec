//! Exact Gauss-Newton matrices of small neural networks, their
//! pseudo-condition numbers, and the analytic upper bounds on them.
//!
//! Matrices are row-major [`spectral::DenseMatrix`] values. Inputs are stored
//! as columns (`d x n`), a layer maps `a_{l-1}` to `a_l` and is stored as an
//! `a_l x a_{l-1}` matrix, and `A ⊗ B` puts `A`'s index on the outer block.

pub mod bounds;
pub mod data;
pub mod error;
pub mod gauss_newton;
pub mod network;
pub mod random;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
