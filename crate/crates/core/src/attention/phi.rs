use crate::linalg::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Nonnegative activation wrapped around Dot-product and Concatenation
/// responses in the invertible variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiActivation {
    #[default]
    Softplus,
    Relu,
    /// `elu(x) + 1`: equals `x + 1` for `x > 0` and `eˣ` otherwise.
    EluShifted,
}

impl PhiActivation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            // log(1 + eˣ) without overflow
            PhiActivation::Softplus => x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            PhiActivation::Relu => x.max(T::zero()),
            PhiActivation::EluShifted => {
                if x > T::zero() {
                    x + T::one()
                } else {
                    x.exp()
                }
            }
        }
    }
}

impl fmt::Display for PhiActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhiActivation::Softplus => "softplus",
            PhiActivation::Relu => "relu",
            PhiActivation::EluShifted => "elu-shifted",
        })
    }
}

impl FromStr for PhiActivation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "softplus" => Ok(PhiActivation::Softplus),
            "relu" => Ok(PhiActivation::Relu),
            "elu" | "elu-shifted" => Ok(PhiActivation::EluShifted),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}
