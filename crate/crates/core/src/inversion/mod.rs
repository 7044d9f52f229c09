//! Fixed-point inversion of residual blocks, empirical Lipschitz
//! estimation and roundtrip diagnostics.

mod fixed_point;
mod lipschitz;
mod roundtrip;

pub use fixed_point::{fixed_point_invert, InversionConfig, InversionReport};
pub use lipschitz::{
    block_probe_directions, estimate_lipschitz, DomainSampler, LipschitzEstimate,
    SampleDistribution, PERTURBATION_SCALES,
};
pub use roundtrip::{
    mse_255, read_reports, roundtrip_batch, roundtrip_check, roundtrip_with_output, write_reports,
};
