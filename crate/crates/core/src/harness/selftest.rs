//! Quick oracle checks run by the `selftest` command.

use super::image::{decode_ppm, encode_ppm, quantize};
use crate::attention::{response_map, AttentionBlock, AttentionKind, BlockConfig, FeatureGrid, Variant};
use crate::error::Result;
use crate::inversion::{roundtrip_check, InversionConfig};
use crate::linalg::{exact_svd_oracle, power_iteration, spectral_normalize, Matrix, PowerIterState, COLD_START_ITERS, DEFAULT_TOL};
use crate::logdet::{brute_force_logdet, logdet_series_map, LogDetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(u64) -> Result<(bool, String)>;

/// Runs every check with `seed`. A check that errors counts as failed.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, Check); 6] = [
        ("power iteration vs exact SVD", power_vs_svd),
        ("spectral normalization bound", normalization_bound),
        ("response column sums", column_sums),
        ("roundtrip reconstruction", roundtrip),
        ("log-det closed form and sign", logdet),
        ("PPM lattice roundtrip", ppm_roundtrip),
    ];
    checks
        .iter()
        .map(|&(name, f)| match f(seed) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

fn power_vs_svd(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let m = Matrix::<f64>::random_normal(8, 8, &mut rng);
        let s = exact_svd_oracle(&m)?;
        if 1.0 - s[1] / s[0] < 0.05 {
            continue;
        }
        let mut st = PowerIterState::cold(seed ^ i);
        let p = power_iteration(&m, &mut st, COLD_START_ITERS, DEFAULT_TOL)?;
        worst = worst.max((p - s[0]).abs() / s[0]);
    }
    Ok((worst <= 1e-6, format!("worst relative error {worst:.2e}")))
}

fn normalization_bound(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let m = Matrix::<f64>::random_normal(12, 12, &mut rng).scaled(3.0);
        let mut st = PowerIterState::cold(seed ^ i);
        let n = spectral_normalize(&m, 0.9, &mut st)?;
        worst = worst.max(exact_svd_oracle(&n)?[0]);
    }
    Ok((worst <= 0.9 + 1e-6, format!("largest σ₁ {worst:.9}")))
}

fn column_sums(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for kind in AttentionKind::ALL {
        let block = AttentionBlock::<f64>::new(BlockConfig::new(kind, Variant::Invertible, 3).with_seed(seed))?;
        for _ in 0..5 {
            let r = response_map(&FeatureGrid::random_unit(3, 6, 6, &mut rng), &block)?;
            for s in r.column_sums() {
                worst = worst.max((s - 1.0).abs());
            }
            min_entry = min_entry.min(r.min_entry());
        }
    }
    Ok((
        worst <= 1e-9 && min_entry >= 0.0,
        format!("max |colsum − 1| {worst:.2e}, min entry {min_entry:.2e}"),
    ))
}

fn roundtrip(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for kind in AttentionKind::ALL {
        let block = AttentionBlock::<f64>::new(BlockConfig::new(kind, Variant::Invertible, 3).with_seed(seed))?;
        for _ in 0..3 {
            let x = FeatureGrid::random_unit(3, 8, 8, &mut rng);
            let r = roundtrip_check(&x, &block, &InversionConfig::default())?;
            worst = worst.max(r.reconstruction_mse.unwrap_or(f64::INFINITY));
            all_converged &= r.converged;
        }
    }
    Ok((
        worst < 1e-6 && all_converged,
        format!("worst MSE {worst:.2e}"),
    ))
}

fn logdet(seed: u64) -> Result<(bool, String)> {
    let half = |x: &FeatureGrid<f64>| Ok(x.map(|v| 0.5 * v));
    let x = FeatureGrid::zeros(10, 1, 1);
    let est = logdet_series_map(&half, &x, &LogDetConfig::default().with_terms(30, 4))?;
    let err = (est.value - 10.0 * 1.5f64.ln()).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for kind in [AttentionKind::Gaussian, AttentionKind::Concatenation] {
        let block = AttentionBlock::<f64>::new(BlockConfig::new(kind, Variant::Invertible, 3).with_seed(seed))?;
        // errors here (sign ≠ +1) fail the check
        brute_force_logdet(&block, &FeatureGrid::random_unit(3, 4, 4, &mut rng), 1e-5)?;
    }
    Ok((err <= 1e-4, format!("closed-form error {err:.2e}, oracle signs +1")))
}

fn ppm_roundtrip(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = quantize(&FeatureGrid::<f64>::random_unit(3, 9, 7, &mut rng));
    let back: FeatureGrid<f64> = decode_ppm(&encode_ppm(&g)?)?;
    Ok((back == g, "9×7 lattice image".into()))
}
