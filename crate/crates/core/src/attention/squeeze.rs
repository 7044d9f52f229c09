use super::FeatureGrid;
use crate::error::{Error, Result};
use crate::linalg::Real;

// Sub-pixel order within each 2×2 block: top-left, top-right, bottom-left,
// bottom-right. Output channel for input channel `c` and sub-pixel `s` is
// `4·c + s`.

/// Space-to-depth: `C×H×W → 4C×(H/2)×(W/2)`.
pub fn squeeze<T: Real>(x: &FeatureGrid<T>) -> Result<FeatureGrid<T>> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::domain(format!("squeeze needs even spatial dims, got {h}x{w}")));
    }
    Ok(FeatureGrid::from_fn(4 * c, h / 2, w / 2, |oc, oh, ow| {
        let (ic, s) = (oc / 4, oc % 4);
        x.get(ic, 2 * oh + s / 2, 2 * ow + s % 2)
    }))
}

/// Inverse of [`squeeze`]: `4C×H×W → C×2H×2W`.
pub fn unsqueeze<T: Real>(x: &FeatureGrid<T>) -> Result<FeatureGrid<T>> {
    let (c4, h, w) = x.shape();
    if c4 % 4 != 0 {
        return Err(Error::domain(format!("unsqueeze needs a multiple of 4 channels, got {c4}")));
    }
    Ok(FeatureGrid::from_fn(c4 / 4, 2 * h, 2 * w, |c, ih, iw| {
        let s = (ih % 2) * 2 + iw % 2;
        x.get(4 * c + s, ih / 2, iw / 2)
    }))
}
