//! Log-determinants of residual blocks.
//!
//! `ln det(I + J_g) = Σ_k (−1)^{k+1} tr(J_gᵏ)/k` whenever `‖J_g‖₂ < 1`. The
//! traces are estimated with Hutchinson probes and matrix-free
//! Jacobian-vector products; [`brute_force_logdet`] assembles the dense
//! Jacobian instead and serves as the reference.

mod oracle;
mod series;

pub use oracle::{brute_force_logdet, brute_force_logdet_map, dense_jacobian, ORACLE_MAX_DIM};
pub use series::{
    hutchinson_trace_power, jvp, logdet_series, logdet_series_map, LogDetConfig, LogDetEstimate,
    ProbeDistribution, TraceEstimate,
};
