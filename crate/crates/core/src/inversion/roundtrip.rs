use super::{fixed_point_invert, InversionConfig, InversionReport};
use crate::attention::{residual_forward, AttentionBlock, FeatureGrid, Variant};
use crate::error::{Error, Result};
use crate::linalg::Real;
use rayon::prelude::*;
use std::io::{BufRead, Write};

/// Mean squared difference after mapping `[0, 1]` values to `[0, 255]`.
pub fn mse_255<T: Real>(a: &FeatureGrid<T>, b: &FeatureGrid<T>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::domain(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.is_empty() {
        return Err(Error::domain("mse of empty grids"));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = (x.to_f64() - y.to_f64()) * 255.0;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Pushes `x` through the block, inverts the result and measures the
/// reconstruction. Requires the invertible variant.
pub fn roundtrip_check<T: Real>(
    x: &FeatureGrid<T>,
    block: &AttentionBlock<T>,
    cfg: &InversionConfig,
) -> Result<InversionReport> {
    if block.variant() != Variant::Invertible {
        return Err(Error::Contract(
            "roundtrip_check needs an invertible block; use roundtrip_with_output to force".into(),
        ));
    }
    roundtrip_with_output(x, block, cfg).map(|(_, r)| r)
}

/// Like [`roundtrip_check`] but accepts any block, for negative controls.
/// Returns the reconstruction alongside the report.
pub fn roundtrip_with_output<T: Real>(
    x: &FeatureGrid<T>,
    block: &AttentionBlock<T>,
    cfg: &InversionConfig,
) -> Result<(FeatureGrid<T>, InversionReport)> {
    let z = residual_forward(x, block)?;
    let (xr, mut report) = fixed_point_invert(&z, &block.branch(), cfg)?;
    report.reconstruction_mse = Some(mse_255(x, &xr)?);
    Ok((xr, report))
}

/// Runs [`roundtrip_with_output`] over a batch in parallel. Results keep the
/// input order.
pub fn roundtrip_batch<T: Real>(
    inputs: &[FeatureGrid<T>],
    block: &AttentionBlock<T>,
    cfg: &InversionConfig,
) -> Vec<Result<(FeatureGrid<T>, InversionReport)>> {
    inputs
        .par_iter()
        .map(|x| roundtrip_with_output(x, block, cfg))
        .collect()
}

/// Writes one JSON object per line.
pub fn write_reports<W: Write>(mut out: W, reports: &[InversionReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_reports<R: BufRead>(input: R) -> Result<Vec<InversionReport>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
