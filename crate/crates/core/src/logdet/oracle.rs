use crate::attention::{AttentionBlock, FeatureGrid};
use crate::error::{Error, Result};
use crate::linalg::{lu_logabsdet, Matrix, Real};
use crate::map::GridMap;
use rayon::prelude::*;

/// Largest grid size `C·H·W` the dense oracle accepts.
pub const ORACLE_MAX_DIM: usize = 256;

/// Dense Jacobian of `g` at `x`, one central-difference column per
/// coordinate. Rows and columns follow the grid's storage order.
pub fn dense_jacobian<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    eps: f64,
) -> Result<Matrix<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("difference step {eps} must be positive")));
    }
    let d = x.len();
    let e = T::lit(eps);
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut xp = x.clone();
            xp.data_mut()[j] = xp.data()[j] + e;
            let mut xm = x.clone();
            xm.data_mut()[j] = xm.data()[j] - e;
            let gp = g.eval(&xp)?;
            let gm = g.eval(&xm)?;
            Ok(gp
                .data()
                .iter()
                .zip(gm.data())
                .map(|(&p, &m)| (p - m).to_f64() / (2.0 * eps))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut jac = Matrix::zeros(d, d);
    for (j, col) in columns.iter().enumerate() {
        if col.len() != d {
            return Err(Error::domain("map changed the grid size"));
        }
        for (i, &v) in col.iter().enumerate() {
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

/// `ln det(I + J_g(x))` from the dense Jacobian and an LU factorization.
///
/// A contractive branch forces a positive determinant, so any other sign
/// is reported as an invariant violation.
pub fn brute_force_logdet_map<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    eps: f64,
) -> Result<f64> {
    let d = x.len();
    if d == 0 || d > ORACLE_MAX_DIM {
        return Err(Error::domain(format!(
            "dense oracle supports 1..={ORACLE_MAX_DIM} dimensions, got {d}"
        )));
    }
    let mut jac = dense_jacobian(g, x, eps)?;
    for i in 0..d {
        jac[(i, i)] += 1.0;
    }
    let lad = lu_logabsdet(&jac)?;
    if lad.sign != 1 {
        return Err(Error::Invariant(format!(
            "Jacobian determinant has sign {} (log|det| = {})",
            lad.sign, lad.log_abs
        )));
    }
    Ok(lad.log_abs)
}

/// [`brute_force_logdet_map`] applied to a block's residual branch.
pub fn brute_force_logdet<T: Real>(block: &AttentionBlock<T>, x: &FeatureGrid<T>, eps: f64) -> Result<f64> {
    brute_force_logdet_map(&block.branch(), x, eps)
}
