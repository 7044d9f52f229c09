use crate::attention::{AttentionBlock, FeatureGrid, Variant};
use crate::error::{Error, Result};
use crate::linalg::{dot, l2, Real};
use crate::map::GridMap;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeDistribution {
    /// Independent ±1 entries.
    #[default]
    Rademacher,
    Gaussian,
}

impl fmt::Display for ProbeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeDistribution::Rademacher => "rademacher",
            ProbeDistribution::Gaussian => "gaussian",
        })
    }
}

impl FromStr for ProbeDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rademacher" => Ok(ProbeDistribution::Rademacher),
            "gaussian" | "normal" => Ok(ProbeDistribution::Gaussian),
            other => Err(Error::Config(format!("unknown probe distribution '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDetConfig {
    /// Number of power-series terms `K`.
    pub series_terms: usize,
    /// Number of Hutchinson probes `S`.
    pub hutchinson_samples: usize,
    /// Step of the central-difference Jacobian-vector products.
    pub jvp_epsilon: f64,
    pub probe_distribution: ProbeDistribution,
    pub seed: u64,
}

impl Default for LogDetConfig {
    fn default() -> Self {
        Self {
            series_terms: 10,
            hutchinson_samples: 8,
            jvp_epsilon: 1e-5,
            probe_distribution: ProbeDistribution::Rademacher,
            seed: 0,
        }
    }
}

impl LogDetConfig {
    /// Defaults with a difference step suited to `T`: `1e-5` for `f64`,
    /// `5e-3` for `f32`.
    pub fn for_precision<T: Real>() -> Self {
        let jvp_epsilon = if T::epsilon().to_f64() < 1e-10 { 1e-5 } else { 5e-3 };
        Self {
            jvp_epsilon,
            ..Self::default()
        }
    }

    pub fn with_terms(mut self, k: usize, s: usize) -> Self {
        self.series_terms = k;
        self.hutchinson_samples = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.series_terms == 0 {
            return Err(Error::Config("series_terms must be at least 1".into()));
        }
        if self.hutchinson_samples == 0 {
            return Err(Error::Config("hutchinson_samples must be at least 1".into()));
        }
        if !(self.jvp_epsilon > 0.0 && self.jvp_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "jvp_epsilon {} must be positive and finite",
                self.jvp_epsilon
            )));
        }
        Ok(())
    }
}

/// Monte Carlo trace estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub value: f64,
    /// Unbiased variance of the per-probe values (zero for a single probe).
    pub sample_variance: f64,
    pub samples: usize,
}

impl TraceEstimate {
    /// Standard error of `value`.
    pub fn standard_error(&self) -> f64 {
        (self.sample_variance / self.samples as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDetEstimate {
    /// Sum of `per_term_contributions`.
    pub value: f64,
    /// `(−1)^{k+1} tr(Jᵏ)/k` for `k = 1..=K`, averaged over probes.
    pub per_term_contributions: Vec<f64>,
    /// Unbiased variance of the per-probe series values.
    pub sample_variance: f64,
    pub samples: usize,
    /// Set when later terms are larger than earlier ones, the usual sign
    /// that the series is not converging.
    pub divergence_warning: bool,
}

impl LogDetEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.sample_variance / self.samples as f64).sqrt()
    }
}

/// Central-difference Jacobian-vector product `(g(x + εv) − g(x − εv)) / 2ε`.
///
/// Exact up to rounding for linear `g`; `O(ε²)` otherwise.
pub fn jvp<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    v: &FeatureGrid<T>,
    eps: f64,
) -> Result<FeatureGrid<T>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("jvp step {eps} must be positive")));
    }
    if !v.is_finite() {
        return Err(Error::domain("jvp direction is not finite"));
    }
    let e = T::lit(eps);
    let plus = g.eval(&x.zip_with(v, |a, d| a + e * d)?)?;
    let minus = g.eval(&x.zip_with(v, |a, d| a - e * d)?)?;
    let two_e = e + e;
    let out = plus.zip_with(&minus, |p, m| (p - m) / two_e)?;
    if !out.is_finite() {
        return Err(Error::domain(format!(
            "non-finite Jacobian-vector product at step {eps}"
        )));
    }
    Ok(out)
}

/// Estimates `tr(Jᵏ)` of `g` at `x` from `cfg.hutchinson_samples` probes.
pub fn hutchinson_trace_power<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    k: usize,
    cfg: &LogDetConfig,
) -> Result<TraceEstimate> {
    if k == 0 {
        return Err(Error::domain("trace power k must be at least 1"));
    }
    cfg.validate()?;
    let per_probe: Vec<f64> = probe_traces(g, x, k, cfg)?
        .into_iter()
        .map(|t| t[k - 1])
        .collect();
    let (value, sample_variance) = mean_var(&per_probe);
    Ok(TraceEstimate {
        value,
        sample_variance,
        samples: per_probe.len(),
    })
}

/// Power-series log-determinant of an invertible block at `x`.
pub fn logdet_series<T: Real>(
    block: &AttentionBlock<T>,
    x: &FeatureGrid<T>,
    cfg: &LogDetConfig,
) -> Result<LogDetEstimate> {
    if block.variant() != Variant::Invertible {
        return Err(Error::Contract(
            "the log-det series needs an invertible block".into(),
        ));
    }
    logdet_series_map(&block.branch(), x, cfg)
}

/// Power-series estimate of `ln det(I + J_g(x))` for any map `g`. The same
/// probes are reused for every power, so the terms are correlated but each
/// is unbiased.
pub fn logdet_series_map<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    cfg: &LogDetConfig,
) -> Result<LogDetEstimate> {
    cfg.validate()?;
    let k_max = cfg.series_terms;
    let traces = probe_traces(g, x, k_max, cfg)?;
    let s = traces.len() as f64;

    let signed = |k: usize, t: f64| {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * t / k as f64
    };
    let mut per_term = vec![0.0; k_max];
    for t in &traces {
        for (k, acc) in per_term.iter_mut().enumerate() {
            *acc += signed(k + 1, t[k]);
        }
    }
    per_term.iter_mut().for_each(|v| *v /= s);
    let per_probe: Vec<f64> = traces
        .iter()
        .map(|t| t.iter().enumerate().map(|(k, &v)| signed(k + 1, v)).sum())
        .collect();
    let (_, sample_variance) = mean_var(&per_probe);
    let value: f64 = per_term.iter().sum();
    if !value.is_finite() {
        return Err(Error::domain("log-det series produced a non-finite value"));
    }
    Ok(LogDetEstimate {
        value,
        divergence_warning: grows(&per_term),
        per_term_contributions: per_term,
        sample_variance,
        samples: traces.len(),
    })
}

/// True when the mean magnitude of the second half of the terms exceeds
/// that of the first half.
fn grows(terms: &[f64]) -> bool {
    if terms.len() < 2 {
        return false;
    }
    let half = terms.len() / 2;
    let mean_abs = |t: &[f64]| t.iter().map(|v| v.abs()).sum::<f64>() / t.len() as f64;
    mean_abs(&terms[half..]) > mean_abs(&terms[..half])
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `vᵀJᵏv` for `k = 1..=k_max`, one row per probe, in probe order.
fn probe_traces<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    k_max: usize,
    cfg: &LogDetConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.hutchinson_samples).map(|_| master.next_u64()).collect();
    seeds
        .par_iter()
        .map(|&s| {
            let v = draw_probe(x, cfg.probe_distribution, s);
            powers_along(g, x, &v, k_max, cfg.jvp_epsilon)
        })
        .collect()
}

fn draw_probe<T: Real>(x: &FeatureGrid<T>, dist: ProbeDistribution, seed: u64) -> FeatureGrid<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = x.shape();
    FeatureGrid::from_fn(c, h, w, |_, _, _| match dist {
        ProbeDistribution::Rademacher => {
            if rng.random::<bool>() {
                T::one()
            } else {
                -T::one()
            }
        }
        ProbeDistribution::Gaussian => {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        }
    })
}

/// Applies `J` repeatedly to `v`. The direction is renormalized before every
/// product and its norm tracked as a logarithm, so each difference step
/// sees a unit vector and large powers neither overflow nor underflow.
fn powers_along<T: Real, G: GridMap<T> + ?Sized>(
    g: &G,
    x: &FeatureGrid<T>,
    v: &FeatureGrid<T>,
    k_max: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max);
    let norm = l2(v.data());
    if norm == T::zero() {
        return Ok(vec![0.0; k_max]);
    }
    let mut u = v.map(|a| a / norm);
    let mut log_norm = norm.to_f64().ln();
    for _ in 0..k_max {
        let ju = jvp(g, x, &u, eps)?;
        let n = l2(ju.data());
        if n == T::zero() {
            out.resize(k_max, 0.0);
            break;
        }
        log_norm += n.to_f64().ln();
        u = ju.map(|a| a / n);
        out.push(log_norm.exp() * dot(v.data(), u.data()).to_f64());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn linear(m: Matrix<f64>) -> impl Fn(&FeatureGrid<f64>) -> Result<FeatureGrid<f64>> + Sync {
        move |x: &FeatureGrid<f64>| x.with_data(m.matvec(x.data())?)
    }

    fn point(d: usize) -> FeatureGrid<f64> {
        FeatureGrid::from_fn(d, 1, 1, |c, _, _| 0.1 * c as f64)
    }

    #[test]
    fn jvp_of_linear_map_is_exact() {
        let m = Matrix::from_fn(4, 4, |i, j| (i as f64 - 2.0 * j as f64) * 0.1);
        let g = linear(m.clone());
        let v = FeatureGrid::from_fn(4, 1, 1, |c, _, _| 1.0 - c as f64);
        let out = jvp(&g, &point(4), &v, 1e-5).unwrap();
        let want = m.matvec(v.data()).unwrap();
        for (a, b) in out.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jvp_of_constant_is_zero() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|_| 3.0));
        let v = FeatureGrid::from_fn(3, 2, 2, |c, h, w| (c + h + w) as f64);
        let out = jvp(&g, &FeatureGrid::zeros(3, 2, 2), &v, 1e-5).unwrap();
        assert!(out.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn jvp_rejects_bad_input() {
        let g = |x: &FeatureGrid<f64>| Ok(x.clone());
        let x = point(2);
        assert!(jvp(&g, &x, &x, 0.0).is_err());
        assert!(jvp(&g, &x, &x.map(|_| f64::NAN), 1e-5).is_err());
        let nan = |x: &FeatureGrid<f64>| Ok(x.map(|_| f64::NAN));
        assert!(jvp(&nan, &x, &x, 1e-5).is_err());
    }

    #[test]
    fn isotropic_trace_is_exact_with_rademacher() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|v| 0.5 * v));
        let est = hutchinson_trace_power(&g, &point(10), 2, &LogDetConfig::default()).unwrap();
        assert!((est.value - 2.5).abs() < 1e-9, "{}", est.value);
        assert!(est.sample_variance < 1e-18);
    }

    #[test]
    fn scalar_multiple_logdet_closed_form() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|v| 0.5 * v));
        let cfg = LogDetConfig::default().with_terms(30, 4);
        let est = logdet_series_map(&g, &point(10), &cfg).unwrap();
        let want = 10.0 * 1.5f64.ln();
        assert!((est.value - want).abs() < 1e-4, "{} vs {want}", est.value);
        assert!(!est.divergence_warning);
        let sum: f64 = est.per_term_contributions.iter().sum();
        assert_eq!(sum, est.value);
        // |term_k| = 10·0.5ᵏ/k
        for (k, t) in est.per_term_contributions.iter().enumerate() {
            let k = (k + 1) as f64;
            assert!((t.abs() - 10.0 * 0.5f64.powf(k) / k).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_branch_gives_zero() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|_| 0.0));
        let est = logdet_series_map(&g, &point(5), &LogDetConfig::default()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn linear_trace_within_three_sigma() {
        let m = Matrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.05 - 0.1);
        let truth: f64 = (0..6).map(|i| m[(i, i)]).sum();
        let g = linear(m);
        let cfg = LogDetConfig::default().with_terms(1, 64).with_seed(9);
        let est = hutchinson_trace_power(&g, &point(6), 1, &cfg).unwrap();
        assert!((est.value - truth).abs() <= 3.0 * est.standard_error() + 1e-12);
    }

    #[test]
    fn growing_terms_raise_the_flag() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|v| 1.5 * v));
        let est = logdet_series_map(&g, &point(3), &LogDetConfig::default()).unwrap();
        assert!(est.divergence_warning);
    }

    #[test]
    fn deterministic_and_validated() {
        let g = |x: &FeatureGrid<f64>| Ok(x.map(|v| 0.3 * v.sin()));
        let cfg = LogDetConfig {
            probe_distribution: ProbeDistribution::Gaussian,
            ..LogDetConfig::default().with_seed(4)
        };
        let a = logdet_series_map(&g, &point(8), &cfg).unwrap();
        assert_eq!(a, logdet_series_map(&g, &point(8), &cfg).unwrap());
        let bad = LogDetConfig {
            hutchinson_samples: 0,
            ..LogDetConfig::default()
        };
        assert!(matches!(logdet_series_map(&g, &point(8), &bad), Err(Error::Config(_))));
        assert!(hutchinson_trace_power(&g, &point(8), 0, &cfg).is_err());
    }

    #[test]
    fn probe_names_parse() {
        for p in [ProbeDistribution::Rademacher, ProbeDistribution::Gaussian] {
            assert_eq!(p.to_string().parse::<ProbeDistribution>().unwrap(), p);
        }
        assert!("uniform".parse::<ProbeDistribution>().is_err());
    }
}
