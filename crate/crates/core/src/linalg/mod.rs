//! Dense matrix kernels: norms, power iteration, spectral normalization,
//! LU log-determinants and an exact singular-value oracle.
//!
//! Everything here works on small, dense, row-major matrices. Nothing is
//! blocked or tiled; the sizes this crate deals with (at most a few hundred
//! rows) do not need it.

mod lu;
mod matrix;
mod norms;
mod power;
mod svd;

pub use lu::{lu_logabsdet, LogAbsDet};
pub use matrix::Matrix;
pub use norms::{norm_frobenius, norm_l1};
pub use power::{
    power_iteration, spectral_normalize, PowerIterState, COLD_START_ITERS, DEFAULT_TOL,
    WARM_START_ITERS,
};
pub use svd::{exact_svd_oracle, SVD_ORACLE_MAX_DIM};

use num_traits::{Float, FloatConst};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Floating point scalar used throughout the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::iter::Sum
    + 'static
{
    /// Short name recorded in serialized containers.
    const NAME: &'static str;

    fn lit(x: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Euclidean norm of a slice.
pub fn l2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Largest absolute entry of a slice, zero when empty.
pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
