use super::{AttentionBlock, AttentionKind, FeatureGrid, PhiActivation, Variant};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How invertible-variant responses are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Normalization {
    /// Every column sums to `target` (1 by default; smaller values tighten the bound).
    Columns { target: f64 },
    /// All entries together sum to 1.
    Global,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::Columns { target: 1.0 }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::Columns { target } => write!(f, "columns:{target}"),
            Normalization::Global => f.write_str("global"),
        }
    }
}

impl FromStr for Normalization {
    type Err = String;

    /// Accepts `columns`, `columns:<target>` or `global`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "global" {
            return Ok(Normalization::Global);
        }
        if s == "columns" || s == "column" {
            return Ok(Normalization::default());
        }
        if let Some(t) = s.strip_prefix("columns:") {
            let target: f64 = t.parse().map_err(|_| format!("bad column target '{t}'"))?;
            if !(target > 0.0 && target <= 1.0) {
                return Err(format!("column target {target} outside (0, 1]"));
            }
            return Ok(Normalization::Columns { target });
        }
        Err(format!("unknown normalization '{s}'"))
    }
}

/// Normalized `m × m` response matrix over positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap<T = f64> {
    entries: Matrix<T>,
}

impl<T: Real> ResponseMap<T> {
    pub fn m(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.entries
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.m()];
        for i in 0..self.m() {
            for (s, &r) in sums.iter_mut().zip(self.entries.row(i)) {
                *s = *s + r;
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.m())
            .map(|i| self.entries.row(i).iter().copied().sum())
            .collect()
    }

    pub fn min_entry(&self) -> T {
        self.entries
            .data()
            .iter()
            .copied()
            .fold(T::infinity(), T::min)
    }
}

/// Per-kind response logits: `x_iᵀx_j`, `(W₁x_i)ᵀ(W₂x_j)` or
/// `W₃[W₁x_i, W₂x_j]`, each multiplied by the block's logit scale.
fn logits<T: Real>(x: &FeatureGrid<T>, block: &AttentionBlock<T>) -> Result<Matrix<T>> {
    let xm = x.to_matrix();
    let scale = T::lit(block.config().logit_scale);
    let raw = match block.kind() {
        AttentionKind::Gaussian => xm.matmul(&xm.transpose())?,
        AttentionKind::EmbeddedGaussian | AttentionKind::DotProduct => {
            let (w1, w2) = block.embeddings()?;
            let theta = w1.apply_rows(&xm)?;
            let varphi = w2.apply_rows(&xm)?;
            theta.matmul(&varphi.transpose())?
        }
        AttentionKind::Concatenation => {
            let (w1, w2) = block.embeddings()?;
            let w3 = block
                .pair_scorer()
                .ok_or_else(|| Error::Contract("concatenation block without W3".into()))?;
            let theta = w1.apply_rows(&xm)?;
            let varphi = w2.apply_rows(&xm)?;
            let e = theta.cols();
            if w3.rows() != 1 || w3.cols() != 2 * e {
                return Err(Error::domain(format!(
                    "W3 must be 1x{}, got {}x{}",
                    2 * e,
                    w3.rows(),
                    w3.cols()
                )));
            }
            let (a, b) = w3.row(0).split_at(e);
            let left: Vec<T> = (0..theta.rows()).map(|i| crate::linalg::dot(theta.row(i), a)).collect();
            let right: Vec<T> = (0..varphi.rows()).map(|j| crate::linalg::dot(varphi.row(j), b)).collect();
            Matrix::from_fn(left.len(), right.len(), |i, j| left[i] + right[j])
        }
    };
    Ok(if scale == T::one() { raw } else { raw.scaled(scale) })
}

/// Unnormalized `m × m` responses `r(x_i, x_j)` for the block's kind.
///
/// Exponential kinds subtract the maximum logit along the axis that is later
/// normalized (per column for the invertible variant, per row otherwise, the
/// global maximum under [`Normalization::Global`]) before exponentiating. The
/// normalized map is unchanged by this shift. Invertible Dot-product and
/// Concatenation responses are wrapped in the block's `φ`.
pub fn raw_response<T: Real>(x: &FeatureGrid<T>, block: &AttentionBlock<T>) -> Result<Matrix<T>> {
    let mut r = logits(x, block)?;
    let m = r.rows();
    match block.kind() {
        AttentionKind::Gaussian | AttentionKind::EmbeddedGaussian => {
            match (block.variant(), block.config().normalization) {
                (Variant::Invertible, Normalization::Columns { .. }) => {
                    for j in 0..m {
                        let mx = (0..m).map(|i| r[(i, j)]).fold(T::neg_infinity(), T::max);
                        for i in 0..m {
                            r[(i, j)] = (r[(i, j)] - mx).exp();
                        }
                    }
                }
                (Variant::Invertible, Normalization::Global) => {
                    let mx = r.data().iter().copied().fold(T::neg_infinity(), T::max);
                    r = r.map(|l| (l - mx).exp());
                }
                (Variant::NonInvertible, _) => {
                    for i in 0..m {
                        let row = r.row_mut(i);
                        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                        for v in row.iter_mut() {
                            *v = (*v - mx).exp();
                        }
                    }
                }
            }
        }
        AttentionKind::DotProduct | AttentionKind::Concatenation => {
            if block.variant() == Variant::Invertible {
                let phi: PhiActivation = block.config().phi;
                r = r.map(|s| phi.apply(s));
            }
        }
    }
    Ok(r)
}

/// Normalizes raw responses into a [`ResponseMap`].
///
/// * invertible: entries must be nonnegative; each column is divided by its
///   sum and scaled to the column target (or the whole matrix by its total
///   under [`Normalization::Global`]). An all-zero column becomes uniform.
/// * non-invertible Gaussian / Embedded Gaussian: each row divided by its sum,
///   all-zero rows become uniform.
/// * non-invertible Dot-product / Concatenation: every entry divided by `m`.
pub fn normalize_response<T: Real>(
    raw: &Matrix<T>,
    kind: AttentionKind,
    variant: Variant,
    normalization: Normalization,
) -> Result<ResponseMap<T>> {
    if !raw.is_square() || raw.is_empty() {
        return Err(Error::domain(format!(
            "response matrix must be square and nonempty, got {}x{}",
            raw.rows(),
            raw.cols()
        )));
    }
    let m = raw.rows();
    let uniform = T::one() / T::lit(m as f64);
    let mut out = raw.clone();

    match variant {
        Variant::Invertible => {
            if let Some(bad) = raw.data().iter().find(|&&v| !(v >= T::zero())) {
                return Err(Error::Contract(format!(
                    "invertible response requires nonnegative entries, found {bad}"
                )));
            }
            match normalization {
                Normalization::Columns { target } => {
                    let target = T::lit(target);
                    let mut sums = vec![T::zero(); m];
                    for i in 0..m {
                        for (s, &v) in sums.iter_mut().zip(raw.row(i)) {
                            *s = *s + v;
                        }
                    }
                    for i in 0..m {
                        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                            *v = if sums[j] > T::zero() {
                                *v / sums[j] * target
                            } else {
                                uniform * target
                            };
                        }
                    }
                }
                Normalization::Global => {
                    let total: T = raw.data().iter().copied().sum();
                    out = if total > T::zero() {
                        raw.map(|v| v / total)
                    } else {
                        raw.map(|_| uniform * uniform)
                    };
                }
            }
        }
        Variant::NonInvertible => match kind {
            AttentionKind::Gaussian | AttentionKind::EmbeddedGaussian => {
                for i in 0..m {
                    let row = out.row_mut(i);
                    let s: T = row.iter().copied().sum();
                    for v in row.iter_mut() {
                        *v = if s != T::zero() { *v / s } else { uniform };
                    }
                }
            }
            AttentionKind::DotProduct | AttentionKind::Concatenation => {
                out = raw.map(|v| v * uniform);
            }
        },
    }
    Ok(ResponseMap { entries: out })
}

/// The block's normalized response map at `x`.
pub fn response_map<T: Real>(x: &FeatureGrid<T>, block: &AttentionBlock<T>) -> Result<ResponseMap<T>> {
    let raw = raw_response(x, block)?;
    normalize_response(&raw, block.kind(), block.variant(), block.config().normalization)
}
