//! Image I/O, reconstruction metrics, experiment configuration and the
//! report-writing experiment runner behind the CLI.

mod config;
mod experiment;
mod image;
mod metrics;
mod selftest;
mod synth;

pub use config::{ExperimentConfig, ImageSource, Precision, SyntheticPattern, MAX_IMAGE_SIZE};
pub use experiment::{
    block_seed, exit_code_for, experiment_block, experiment_block_config, format_summary,
    load_images, recon_path, run_experiment, ExperimentOutcome, EXIT_CONFIG, EXIT_INVARIANT,
    EXIT_IO, EXIT_OK,
};
pub use image::{decode_ppm, encode_ppm, load_image, quantize, save_image};
pub use metrics::{
    compute_mse, compute_ssim, compute_ssim_with, KindSummary, MetricsRecord, SSIM_K1, SSIM_K2,
    SSIM_RANGE, SSIM_WINDOW, V_SCORE_MSE_THRESHOLD,
};
pub use selftest::{run_selftest, CheckResult};
pub use synth::synthetic_batch;
