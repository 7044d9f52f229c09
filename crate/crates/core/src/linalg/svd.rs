use super::{Matrix, Real};
use crate::error::{Error, Result};

/// Largest `min(rows, cols)` accepted by [`exact_svd_oracle`].
pub const SVD_ORACLE_MAX_DIM: usize = 64;

const MAX_SWEEPS: usize = 100;

/// All singular values of `m`, descending, computed in `f64`.
///
/// One-sided (Hestenes) Jacobi: plane rotations are applied to pairs of
/// columns until the implicit Gram matrix `mᵀm` is diagonal, i.e. until the
/// off-diagonal Frobenius mass drops below `1e-12` relative to `‖m‖_F²`.
/// The singular values are then the column norms. Only meant for the small
/// matrices used to check the production code paths.
pub fn exact_svd_oracle<T: Real>(m: &Matrix<T>) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::domain("svd oracle of an empty matrix"));
    }
    if m.rows().min(m.cols()) > SVD_ORACLE_MAX_DIM {
        return Err(Error::domain(format!(
            "svd oracle limited to min(rows, cols) <= {SVD_ORACLE_MAX_DIM}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    // Work on the orientation with at most as many columns as rows.
    let a: Matrix<f64> = if m.cols() > m.rows() {
        m.transpose().cast()
    } else {
        m.cast()
    };
    let (rows, n) = (a.rows(), a.cols());
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let total: f64 = a.data().iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = gram_entries(&cols[p], &cols[q]);
                off += gamma * gamma;
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for i in 0..rows {
                    let x = cp[i];
                    let y = cq[i];
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if off.sqrt() < 1e-12 * total {
            break;
        }
    }

    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

fn gram_entries(p: &[f64], q: &[f64]) -> (f64, f64, f64) {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (&x, &y) in p.iter().zip(q) {
        alpha += x * x;
        beta += y * y;
        gamma += x * y;
    }
    (alpha, beta, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_frobenius;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_spectrum() {
        let m = Matrix::from_diag(&[3.0, 1.0]);
        let sv = exact_svd_oracle(&m).unwrap();
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        // |u| = 2, |v| = 3
        let u = [2.0, 0.0, 0.0];
        let v = [0.0, 3.0 / 2f64.sqrt(), 3.0 / 2f64.sqrt()];
        let m = Matrix::from_fn(3, 3, |i, j| u[i] * v[j]);
        let sv = exact_svd_oracle(&m).unwrap();
        assert!((sv[0] - 6.0).abs() < 1e-12);
        assert!(sv[1].abs() < 1e-12 && sv[2].abs() < 1e-12);
    }

    #[test]
    fn squared_spectrum_equals_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = Matrix::<f64>::random_normal(8, 8, &mut rng);
            let sv = exact_svd_oracle(&m).unwrap();
            let sum_sq: f64 = sv.iter().map(|s| s * s).sum();
            let f = norm_frobenius(&m).unwrap();
            assert!((sum_sq - f * f).abs() < 1e-9, "{sum_sq} vs {}", f * f);
            assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn wide_matrix_is_transposed() {
        let m = Matrix::from_rows(&[&[0.0, 2.0, 0.0], &[1.0, 0.0, 0.0]]);
        let sv = exact_svd_oracle(&m).unwrap();
        assert_eq!(sv.len(), 2);
        assert!((sv[0] - 2.0).abs() < 1e-14 && (sv[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scope_guard() {
        assert!(exact_svd_oracle(&Matrix::<f64>::zeros(65, 65)).is_err());
        assert!(exact_svd_oracle(&Matrix::<f64>::zeros(65, 64)).is_ok());
        assert!(exact_svd_oracle(&Matrix::<f64>::zeros(0, 0)).is_err());
    }
}
