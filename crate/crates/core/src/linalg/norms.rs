use super::{Matrix, Real};
use crate::error::{Error, Result};

/// Induced L1 norm: the largest absolute column sum.
pub fn norm_l1<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.is_empty() {
        return Err(Error::domain("norm_l1 of an empty matrix"));
    }
    let mut sums = vec![T::zero(); m.cols()];
    for i in 0..m.rows() {
        for (s, &a) in sums.iter_mut().zip(m.row(i)) {
            *s = *s + a.abs();
        }
    }
    Ok(sums.into_iter().fold(T::zero(), T::max))
}

pub fn norm_frobenius<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.is_empty() {
        return Err(Error::domain("norm_frobenius of an empty matrix"));
    }
    Ok(m.data().iter().map(|&a| a * a).sum::<T>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_l1(m: &Matrix<f64>) -> f64 {
        let mut best = 0.0f64;
        for j in 0..m.cols() {
            let mut s = 0.0;
            for i in 0..m.rows() {
                s += m[(i, j)].abs();
            }
            best = best.max(s);
        }
        best
    }

    #[test]
    fn l1_examples() {
        assert_eq!(norm_l1(&Matrix::<f64>::identity(3)).unwrap(), 1.0);
        let m = Matrix::from_rows(&[&[1.0, -2.0], &[3.0, 4.0]]);
        assert_eq!(norm_l1(&m).unwrap(), 6.0);
    }

    #[test]
    fn l1_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = Matrix::<f64>::random_normal(8, 8, &mut rng);
            assert_eq!(norm_l1(&m).unwrap(), naive_l1(&m));
        }
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(norm_frobenius(&Matrix::<f64>::identity(4)).unwrap(), 2.0);
        assert_eq!(norm_frobenius(&Matrix::<f64>::zeros(3, 2)).unwrap(), 0.0);
    }

    #[test]
    fn empty_is_domain_error() {
        let e = Matrix::<f64>::zeros(0, 3);
        assert!(matches!(norm_l1(&e), Err(Error::Domain(_))));
        assert!(matches!(norm_frobenius(&e), Err(Error::Domain(_))));
    }
}
