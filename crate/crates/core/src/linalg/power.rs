use super::{l2, Matrix, Real};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Iterations per normalization call once the state is warm.
pub const WARM_START_ITERS: usize = 5;
/// Iteration cap for a state with no stored vectors.
pub const COLD_START_ITERS: usize = 200;
/// Early-stop threshold on successive singular value estimates.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Persisted singular-vector estimates for one weight matrix.
///
/// An empty state (no vectors) is initialized from `seed` on first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PowerIterState<T = f64> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub sigma_estimate: T,
    pub seed: u64,
}

impl<T: Real> Default for PowerIterState<T> {
    fn default() -> Self {
        Self::cold(0)
    }
}

impl<T: Real> PowerIterState<T> {
    pub fn cold(seed: u64) -> Self {
        Self {
            u: Vec::new(),
            v: Vec::new(),
            sigma_estimate: T::zero(),
            seed,
        }
    }

    pub fn is_cold(&self) -> bool {
        self.u.is_empty() && self.v.is_empty()
    }

    fn initialize(&mut self, m: &Matrix<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut v: Vec<T> = (0..m.cols())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            })
            .collect();
        normalize_in_place(&mut v);
        self.v = v;
        self.u = vec![T::zero(); m.rows()];
        if let Some(first) = self.u.first_mut() {
            *first = T::one();
        }
        self.sigma_estimate = T::zero();
    }
}

fn normalize_in_place<T: Real>(v: &mut [T]) -> T {
    let n = l2(v);
    if n > T::zero() {
        for x in v.iter_mut() {
            *x = *x / n;
        }
    }
    n
}

/// Runs up to `iters` rounds of power iteration on `mᵀm`, updating `state`
/// in place and returning the largest-singular-value estimate.
///
/// The estimate `‖m v‖` is non-decreasing from round to round. Iteration
/// stops early once two successive estimates differ by less than `tol`.
pub fn power_iteration<T: Real>(
    m: &Matrix<T>,
    state: &mut PowerIterState<T>,
    iters: usize,
    tol: T,
) -> Result<T> {
    if iters == 0 {
        return Err(Error::domain("power iteration needs at least one iteration"));
    }
    if m.is_empty() {
        return Err(Error::domain("power iteration on an empty matrix"));
    }
    if state.is_cold() {
        state.initialize(m);
    } else if state.u.len() != m.rows() || state.v.len() != m.cols() {
        return Err(Error::domain(format!(
            "power iteration state has u:{} v:{}, matrix is {}x{}",
            state.u.len(),
            state.v.len(),
            m.rows(),
            m.cols()
        )));
    }

    let mut previous = state.sigma_estimate;
    for _ in 0..iters {
        let mut v = m.matvec_t(&state.u)?;
        if normalize_in_place(&mut v) == T::zero() {
            // u is orthogonal to range(m); restart from the stored v.
            v = state.v.clone();
        }
        let mut u = m.matvec(&v)?;
        let sigma = normalize_in_place(&mut u);
        if sigma == T::zero() {
            state.sigma_estimate = T::zero();
            return Ok(T::zero());
        }
        state.u = u;
        state.v = v;
        state.sigma_estimate = sigma;
        if (sigma - previous).abs() < tol {
            break;
        }
        previous = sigma;
    }
    Ok(state.sigma_estimate)
}

/// Rescales `m` so its largest singular value is at most `c`.
///
/// Returns `c·m/σ(m)` when `c/σ(m) < 1` and `m` unchanged otherwise, including
/// the degenerate `σ(m) = 0` case. A cold state runs up to
/// [`COLD_START_ITERS`] rounds, a warm one [`WARM_START_ITERS`].
pub fn spectral_normalize<T: Real>(
    m: &Matrix<T>,
    c: T,
    state: &mut PowerIterState<T>,
) -> Result<Matrix<T>> {
    if !(c > T::zero() && c <= T::one()) {
        return Err(Error::domain(format!("Lipschitz target c={c} outside (0, 1]")));
    }
    let iters = if state.is_cold() {
        COLD_START_ITERS
    } else {
        WARM_START_ITERS
    };
    let sigma = power_iteration(m, state, iters, T::lit(DEFAULT_TOL))?;
    if sigma == T::zero() || c / sigma >= T::one() {
        return Ok(m.clone());
    }
    Ok(m.scaled(c / sigma))
}
