//! Reconstruction metrics on the 0–255 scale.

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::linalg::Real;
use serde::{Deserialize, Serialize};

/// MSE below which an image counts as validly reconstructed.
pub const V_SCORE_MSE_THRESHOLD: f64 = 10.0;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 255.0;

/// Mean squared error after scaling both grids from `[0, 1]` to `[0, 255]`.
pub fn compute_mse<T: Real>(a: &FeatureGrid<T>, b: &FeatureGrid<T>) -> Result<f64> {
    crate::inversion::mse_255(a, b)
}

/// SSIM with the default 8×8 window and standard constants.
pub fn compute_ssim<T: Real>(a: &FeatureGrid<T>, b: &FeatureGrid<T>) -> Result<f64> {
    compute_ssim_with(a, b, SSIM_WINDOW, SSIM_K1, SSIM_K2, SSIM_RANGE)
}

/// Mean SSIM over every `window × window` placement (stride 1) in every
/// channel. Each window uses uniform weights and population moments;
/// values are compared on the 0–`range` scale.
pub fn compute_ssim_with<T: Real>(
    a: &FeatureGrid<T>,
    b: &FeatureGrid<T>,
    window: usize,
    k1: f64,
    k2: f64,
    range: f64,
) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::domain(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ch, h, w) = a.shape();
    if window == 0 || window > h.min(w) {
        return Err(Error::domain(format!(
            "SSIM window {window} does not fit a {h}×{w} image"
        )));
    }
    let c1 = (k1 * range).powi(2);
    let c2 = (k2 * range).powi(2);
    let n = (window * window) as f64;
    let scale = range;

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let pa: Vec<f64> = plane(a, c, scale);
        let pb: Vec<f64> = plane(b, c, scale);
        for y in 0..=h - window {
            for x in 0..=w - window {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..window {
                    let row = (y + dy) * w + x;
                    for i in row..row + window {
                        let (u, v) = (pa[i], pb[i]);
                        sa += u;
                        sb += v;
                        saa += u * u;
                        sbb += v * v;
                        sab += u * v;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn plane<T: Real>(g: &FeatureGrid<T>, c: usize, scale: f64) -> Vec<f64> {
    let (_, h, w) = g.shape();
    (0..h * w).map(|p| g.get(c, p / w, p % w).to_f64() * scale).collect()
}

/// Per-image outcome of a roundtrip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: String,
    pub image: usize,
    /// Absent when the inversion failed outright.
    pub mse: Option<f64>,
    pub ssim: Option<f64>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logdet_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logdet_oracle: Option<f64>,
}

impl MetricsRecord {
    pub fn is_valid(&self) -> bool {
        self.mse.is_some_and(|m| m < V_SCORE_MSE_THRESHOLD)
    }
}

/// Aggregate over one kind's records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: String,
    pub images: usize,
    /// Mean over images that produced a reconstruction.
    pub mean_mse: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub v_score: f64,
    pub converged: usize,
    pub failures: usize,
    /// False for non-invertible blocks, whose inversion is only attempted.
    pub contract: bool,
}

impl KindSummary {
    pub fn from_records(kind: &str, records: &[MetricsRecord], contract: bool) -> Self {
        let mean = |f: fn(&MetricsRecord) -> Option<f64>| {
            let vals: Vec<f64> = records.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let valid = records.iter().filter(|r| r.is_valid()).count();
        Self {
            kind: kind.to_string(),
            images: records.len(),
            mean_mse: mean(|r| r.mse),
            mean_ssim: mean(|r| r.ssim),
            v_score: if records.is_empty() {
                0.0
            } else {
                valid as f64 / records.len() as f64
            },
            converged: records.iter().filter(|r| r.converged).count(),
            failures: records.iter().filter(|r| r.error.is_some()).count(),
            contract,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, h: usize, w: usize) -> FeatureGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureGrid::from_fn(3, h, w, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn mse_examples() {
        let a = random(1, 4, 4);
        assert_eq!(compute_mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0 / 255.0);
        assert!((compute_mse(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mse_matches_naive_loop() {
        let a = random(2, 5, 6);
        let b = random(3, 5, 6);
        let mut sum = 0.0;
        for c in 0..3 {
            for y in 0..5 {
                for x in 0..6 {
                    let d = a.get(c, y, x) * 255.0 - b.get(c, y, x) * 255.0;
                    sum += d * d;
                }
            }
        }
        let naive = sum / 90.0;
        assert!((compute_mse(&a, &b).unwrap() - naive).abs() <= 1e-9 * naive);
    }

    #[test]
    fn ssim_of_identical_is_one() {
        let a = random(4, 12, 10);
        assert!((compute_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_image_is_negative() {
        let a = FeatureGrid::<f64>::from_fn(3, 16, 16, |c, y, x| ((x + 2 * y + c) % 7) as f64 / 6.0);
        let inv = a.map(|v| 1.0 - v);
        let s = compute_ssim(&a, &inv).unwrap();
        assert!(s < 0.0, "{s}");
        assert!(s >= -1.0);
    }

    #[test]
    fn ssim_of_constants_is_luminance_only() {
        let a = FeatureGrid::<f64>::from_fn(3, 8, 8, |_, _, _| 0.2);
        let b = a.map(|_| 0.7);
        let (m1, m2) = (0.2 * 255.0, 0.7 * 255.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let want = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert!((compute_ssim(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_single_window_oracle() {
        // one window covering the whole 8×8 image, computed from definitions
        let a = random(5, 8, 8);
        let b = random(6, 8, 8);
        let c1 = (0.01f64 * 255.0).powi(2);
        let c2 = (0.03f64 * 255.0).powi(2);
        let mut acc = 0.0;
        for c in 0..3 {
            let xs: Vec<f64> = (0..64).map(|p| a.get(c, p / 8, p % 8) * 255.0).collect();
            let ys: Vec<f64> = (0..64).map(|p| b.get(c, p / 8, p % 8) * 255.0).collect();
            let mx = xs.iter().sum::<f64>() / 64.0;
            let my = ys.iter().sum::<f64>() / 64.0;
            let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 64.0;
            let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 64.0;
            let cov = xs.iter().zip(&ys).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / 64.0;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        assert!((compute_ssim(&a, &b).unwrap() - acc / 3.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_errors() {
        let a = random(7, 6, 6);
        assert!(compute_ssim(&a, &a).is_err());
        assert!(compute_ssim(&random(1, 8, 8), &random(1, 8, 9)).is_err());
    }

    #[test]
    fn v_score_counts_images_below_threshold() {
        let rec = |mse: Option<f64>| MetricsRecord {
            kind: "gaussian".into(),
            image: 0,
            mse,
            ssim: mse.map(|_| 1.0),
            converged: mse.is_some(),
            iterations: None,
            final_residual: None,
            error: mse.is_none().then(|| "diverged".into()),
            logdet_estimate: None,
            logdet_oracle: None,
        };
        let records = vec![rec(Some(0.0)), rec(Some(9.99)), rec(Some(10.0)), rec(None)];
        let s = KindSummary::from_records("gaussian", &records, true);
        assert_eq!(s.v_score, 0.5);
        assert_eq!(s.failures, 1);
        assert!((s.mean_mse.unwrap() - 19.99 / 3.0).abs() < 1e-12);
    }
}
