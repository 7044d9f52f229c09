use super::{Matrix, Real};
use crate::error::{Error, Result};

/// `log|det|` together with the determinant's sign.
///
/// A singular matrix yields `sign = 0` and `log_abs = -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAbsDet {
    pub log_abs: f64,
    pub sign: i8,
}

/// Partial-pivoted LU factorization, accumulated in `f64`.
pub fn lu_logabsdet<T: Real>(m: &Matrix<T>) -> Result<LogAbsDet> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "log-determinant of a non-square {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut a: Matrix<f64> = m.cast();
    let mut sign: i8 = 1;
    let mut log_abs = 0.0;

    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
            .unwrap_or(k);
        let pivot = a[(pivot_row, k)];
        if pivot == 0.0 || !pivot.is_finite() {
            return Ok(LogAbsDet {
                log_abs: f64::NEG_INFINITY,
                sign: 0,
            });
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pivot_row, j)];
                a[(pivot_row, j)] = tmp;
            }
            sign = -sign;
        }
        if pivot < 0.0 {
            sign = -sign;
        }
        log_abs += pivot.abs().ln();
        for i in (k + 1)..n {
            let factor = a[(i, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                a[(i, j)] -= factor * a[(k, j)];
            }
            a[(i, k)] = 0.0;
        }
    }
    Ok(LogAbsDet { log_abs, sign })
}
