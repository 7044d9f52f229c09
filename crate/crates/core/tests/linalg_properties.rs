use invattn::linalg::{
    exact_svd_oracle, lu_logabsdet, norm_frobenius, norm_l1, power_iteration, spectral_normalize,
    Matrix, PowerIterState, COLD_START_ITERS, DEFAULT_TOL,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn normal(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    Matrix::random_normal(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sigma1(m: &Matrix<f64>) -> f64 {
    exact_svd_oracle(m).unwrap()[0]
}

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-9 * rhs.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn norms_are_submultiplicative(n in 1usize..=16, k in 1usize..=16, p in 1usize..=16, seed: u64) {
        let g = normal(n, k, seed);
        let f = normal(k, p, seed.wrapping_add(1));
        let gf = g.matmul(&f).unwrap();
        prop_assert!(le(norm_l1(&gf).unwrap(), norm_l1(&g).unwrap() * norm_l1(&f).unwrap()));
        prop_assert!(le(norm_frobenius(&gf).unwrap(), norm_frobenius(&g).unwrap() * norm_frobenius(&f).unwrap()));
        prop_assert!(le(sigma1(&gf), sigma1(&g) * sigma1(&f)));
    }

    #[test]
    fn spectral_norm_below_frobenius(n in 1usize..=16, k in 1usize..=16, seed: u64) {
        let m = normal(n, k, seed);
        prop_assert!(le(sigma1(&m), norm_frobenius(&m).unwrap()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn power_iteration_never_overshoots(n in 1usize..=12, k in 1usize..=12, seed: u64, iters in 1usize..=30) {
        let m = normal(n, k, seed);
        let mut st = PowerIterState::cold(seed);
        let s = power_iteration(&m, &mut st, iters, 0.0).unwrap();
        prop_assert!(s <= sigma1(&m) + 1e-9);
    }

    #[test]
    fn power_iteration_converges_with_a_gap(n in 2usize..=12, seed: u64) {
        let m = normal(n, n, seed);
        let s = exact_svd_oracle(&m).unwrap();
        prop_assume!(1.0 - s[1] / s[0] >= 0.05);
        let mut st = PowerIterState::cold(seed);
        let p = power_iteration(&m, &mut st, COLD_START_ITERS, DEFAULT_TOL).unwrap();
        prop_assert!((p - s[0]).abs() <= 1e-6 * s[0], "{} vs {}", p, s[0]);
    }

    #[test]
    fn spectral_normalize_is_idempotent(n in 1usize..=12, seed: u64, scale in 0.1f64..10.0) {
        let m = normal(n, n, seed).scaled(scale);
        let once = spectral_normalize(&m, 0.9, &mut PowerIterState::cold(seed)).unwrap();
        let twice = spectral_normalize(&once, 0.9, &mut PowerIterState::cold(seed)).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn logdet_of_product_is_sum(n in 1usize..=10, seed: u64) {
        // identity plus a small perturbation keeps both factors well conditioned
        let a = Matrix::identity(n).add(&normal(n, n, seed).scaled(0.3)).unwrap();
        let b = Matrix::identity(n).add(&normal(n, n, seed ^ 7).scaled(0.3)).unwrap();
        let la = lu_logabsdet(&a).unwrap();
        let lb = lu_logabsdet(&b).unwrap();
        prop_assume!(la.sign != 0 && lb.sign != 0);
        let lab = lu_logabsdet(&a.matmul(&b).unwrap()).unwrap();
        prop_assert!((lab.log_abs - la.log_abs - lb.log_abs).abs() <= 1e-8);
        prop_assert_eq!(lab.sign, la.sign * lb.sign);
    }
}
