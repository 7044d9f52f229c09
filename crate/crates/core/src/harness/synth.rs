//! Seeded synthetic test images on the 8-bit lattice.

use super::config::SyntheticPattern;
use super::image::quantize;
use crate::attention::FeatureGrid;
use crate::linalg::Real;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `count` RGB images of `size × size`, reproducible from `seed`.
pub fn synthetic_batch<T: Real>(
    pattern: SyntheticPattern,
    size: usize,
    count: usize,
    seed: u64,
) -> Vec<FeatureGrid<T>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
            quantize(&synthetic_image(pattern, size, &mut rng))
        })
        .collect()
}

fn synthetic_image<T: Real, R: Rng>(pattern: SyntheticPattern, size: usize, rng: &mut R) -> FeatureGrid<T> {
    let color = |rng: &mut R| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    match pattern {
        SyntheticPattern::Gradient => {
            let (a, b) = (color(rng), color(rng));
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let (dx, dy) = (angle.cos(), angle.sin());
            let span = (size.max(2) - 1) as f64;
            FeatureGrid::from_fn(3, size, size, |c, h, w| {
                let u = (w as f64 / span - 0.5) * dx + (h as f64 / span - 0.5) * dy;
                let t = (u / std::f64::consts::SQRT_2 + 0.5).clamp(0.0, 1.0);
                T::lit(a[c] + (b[c] - a[c]) * t)
            })
        }
        SyntheticPattern::Checkerboard => {
            let (a, b) = (color(rng), color(rng));
            let cell = [2, 4][rng.random_range(0..2)];
            let (oy, ox) = (rng.random_range(0..cell), rng.random_range(0..cell));
            FeatureGrid::from_fn(3, size, size, |c, h, w| {
                let dark = ((h + oy) / cell + (w + ox) / cell) % 2 == 0;
                T::lit(if dark { a[c] } else { b[c] })
            })
        }
        SyntheticPattern::GaussianNoise => {
            let n = Normal::<f64>::new(0.5, 0.2).expect("valid normal");
            FeatureGrid::from_fn(3, size, size, |_, _, _| T::lit(n.sample(rng).clamp(0.0, 1.0)))
        }
    }
}
