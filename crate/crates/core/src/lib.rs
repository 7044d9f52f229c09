//! Lipschitz-constrained invertible attention.
//!
//! Residual attention blocks `f(x) = x + W_L·R(x)·F(x)` whose residual branch
//! is kept contractive, so the block can be inverted by fixed-point
//! iteration and its log-determinant estimated with a power series of
//! Jacobian traces.

pub mod attention;
pub mod error;
pub mod harness;
pub mod inversion;
pub mod linalg;
pub mod logdet;
pub mod map;

pub use error::{Error, Result};
pub use map::GridMap;
