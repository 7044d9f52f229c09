use crate::attention::FeatureGrid;
use crate::error::Result;
use crate::linalg::Real;

/// A map between feature grids, e.g. the residual branch `g` of a block.
pub trait GridMap<T: Real>: Sync {
    fn eval(&self, x: &FeatureGrid<T>) -> Result<FeatureGrid<T>>;
}

impl<T, F> GridMap<T> for F
where
    T: Real,
    F: Fn(&FeatureGrid<T>) -> Result<FeatureGrid<T>> + Sync,
{
    fn eval(&self, x: &FeatureGrid<T>) -> Result<FeatureGrid<T>> {
        self(x)
    }
}
