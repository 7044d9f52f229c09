use super::FeatureGrid;
use crate::error::{Error, Result};
use crate::linalg::{spectral_normalize, Matrix, PowerIterState, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Channel-mixing weight (a 1×1 convolution) with an optional spectral bound.
///
/// `raw` is the stored weight, `effective` the weight actually applied. With a
/// bound `c`, [`SpectralLinear::normalize`] rescales `raw` so that
/// `σ(effective) ≤ c`, reusing the persisted power-iteration state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralLinear<T = f64> {
    raw: Matrix<T>,
    effective: Matrix<T>,
    state: PowerIterState<T>,
    bound: Option<T>,
}

impl<T: Real> SpectralLinear<T> {
    /// An unconstrained weight; `effective == raw`.
    pub fn unconstrained(weight: Matrix<T>) -> Self {
        Self {
            effective: weight.clone(),
            raw: weight,
            state: PowerIterState::cold(0),
            bound: None,
        }
    }

    /// A weight bounded by `c`, normalized immediately.
    pub fn constrained(weight: Matrix<T>, c: T, seed: u64) -> Result<Self> {
        let mut layer = Self {
            effective: weight.clone(),
            raw: weight,
            state: PowerIterState::cold(seed),
            bound: Some(c),
        };
        layer.normalize()?;
        Ok(layer)
    }

    /// Uniform `[-a, a]` init with `a = 1/√fan_in`.
    pub fn init_uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Matrix<T> {
        let a = 1.0 / (in_dim as f64).sqrt();
        Matrix::random_uniform(out_dim, in_dim, a, rng)
    }

    /// Re-runs spectral normalization of `raw` into `effective`.
    pub fn normalize(&mut self) -> Result<()> {
        self.effective = match self.bound {
            Some(c) => spectral_normalize(&self.raw, c, &mut self.state)?,
            None => self.raw.clone(),
        };
        Ok(())
    }

    /// Multiplies the effective weight by `factor`, bypassing the bound.
    /// Used to build blocks that deliberately violate their contract.
    pub fn scale_effective(&mut self, factor: T) {
        self.effective = self.effective.scaled(factor);
    }

    pub fn raw(&self) -> &Matrix<T> {
        &self.raw
    }

    pub fn effective(&self) -> &Matrix<T> {
        &self.effective
    }

    pub fn state(&self) -> &PowerIterState<T> {
        &self.state
    }

    pub fn bound(&self) -> Option<T> {
        self.bound
    }

    pub fn in_dim(&self) -> usize {
        self.raw.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.raw.rows()
    }

    /// Applies the effective weight to every row of a `positions × in_dim` matrix.
    pub fn apply_rows(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.in_dim() {
            return Err(Error::domain(format!(
                "1x1 conv expects {} channels, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        x.matmul(&self.effective.transpose())
    }
}

/// Applies a 1×1 convolution: each position's channel vector is multiplied by
/// the effective weight. Spatial dimensions are unchanged.
pub fn apply_1x1_conv<T: Real>(x: &FeatureGrid<T>, w: &SpectralLinear<T>) -> Result<FeatureGrid<T>> {
    let out = w.apply_rows(&x.to_matrix())?;
    FeatureGrid::from_matrix(out, x.height(), x.width())
}
