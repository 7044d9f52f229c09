//! End-to-end reconstruction experiment: build one block per kind, push
//! every image through it and back, and write the reports.

use super::config::{ExperimentConfig, ImageSource, Precision};
use super::image::{load_image, save_image};
use super::metrics::{compute_mse, compute_ssim, KindSummary, MetricsRecord};
use super::synth::synthetic_batch;
use crate::attention::{squeeze, unsqueeze, AttentionBlock, AttentionKind, BlockConfig, FeatureGrid, Variant};
use crate::error::{Error, Result};
use crate::inversion::{roundtrip_with_output, InversionConfig};
use crate::linalg::Real;
use crate::logdet::{brute_force_logdet, logdet_series, LogDetConfig, ORACLE_MAX_DIM};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for an error that aborted a command.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Parse { .. } | Error::Serde(_) => EXIT_IO,
        Error::Contract(_) | Error::Divergence { .. } | Error::Invariant(_) => EXIT_INVARIANT,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summaries: Vec<KindSummary>,
    pub records: Vec<MetricsRecord>,
    /// [`EXIT_INVARIANT`] when an invertible kind misses the V-score floor.
    pub exit_code: i32,
    pub summary_path: PathBuf,
    pub records_path: PathBuf,
}

/// Seed of the block for `kind`, independent of which other kinds run.
pub fn block_seed(seed: u64, kind: AttentionKind) -> u64 {
    let idx = AttentionKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64;
    seed ^ (idx + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Block configuration an experiment uses for `kind`.
pub fn experiment_block_config(cfg: &ExperimentConfig, kind: AttentionKind) -> BlockConfig {
    BlockConfig {
        phi: cfg.phi,
        logit_scale: cfg.logit_scale,
        normalization: cfg.normalization,
        ..BlockConfig::new(kind, cfg.variant, cfg.channels())
            .with_seed(block_seed(cfg.seed, kind))
            .with_c(cfg.c)
    }
}

/// Builds the normalized block for `kind`, applying the weight stress knob.
pub fn experiment_block<T: Real>(cfg: &ExperimentConfig, kind: AttentionKind) -> Result<AttentionBlock<T>> {
    let mut block = AttentionBlock::new(experiment_block_config(cfg, kind))?;
    if cfg.weight_scale != 1.0 {
        block.break_bound(T::lit(cfg.weight_scale));
    }
    Ok(block)
}

/// Loads or generates the configured images.
pub fn load_images<T: Real>(cfg: &ExperimentConfig) -> Result<Vec<FeatureGrid<T>>> {
    match &cfg.source {
        ImageSource::Synthetic(p) => Ok(synthetic_batch(*p, cfg.size, cfg.batch, cfg.seed)),
        ImageSource::Directory(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
                .collect();
            paths.sort();
            paths.truncate(cfg.batch);
            if paths.is_empty() {
                return Err(Error::Config(format!("no .ppm files in {}", dir.display())));
            }
            let images: Vec<FeatureGrid<T>> = paths.iter().map(load_image).collect::<Result<_>>()?;
            for (p, g) in paths.iter().zip(&images) {
                let (_, h, w) = g.shape();
                if h.max(w) > super::config::MAX_IMAGE_SIZE || h.min(w) < super::metrics::SSIM_WINDOW {
                    return Err(Error::Config(format!("{}: unsupported size {w}×{h}", p.display())));
                }
                if cfg.squeeze && (h % 2 != 0 || w % 2 != 0) {
                    return Err(Error::Config(format!("{}: odd size {w}×{h} cannot be squeezed", p.display())));
                }
            }
            Ok(images)
        }
    }
}

/// Runs the experiment and writes `summary.txt`, `records.jsonl`,
/// `blocks/<kind>.json` and `recon/<kind>/<index>.ppm` under `cfg.out`.
///
/// Per-image failures are recorded and do not stop the run. Errors are
/// returned only for invalid configuration and I/O problems.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg),
        Precision::F32 => run_typed::<f32>(cfg),
    }
}

fn run_typed<T: Real>(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let images = load_images::<T>(cfg)?;
    fs::create_dir_all(cfg.out.join("blocks"))?;
    let inv_cfg = InversionConfig {
        max_iters: cfg.iters,
        early_stop_tol: cfg.tol,
        record_trace: false,
    };
    let logdet_cfg = cfg.logdet.as_ref().map(|ld| LogDetConfig {
        seed: ld.seed ^ cfg.seed,
        ..ld.clone()
    });

    let mut summaries = Vec::new();
    let mut all_records = Vec::new();
    for &kind in &cfg.kinds {
        let block = experiment_block::<T>(cfg, kind)?;
        block.save(cfg.out.join("blocks").join(format!("{kind}.json")))?;

        let results: Vec<(MetricsRecord, Option<FeatureGrid<T>>)> = images
            .par_iter()
            .enumerate()
            .map(|(i, x)| process_image(kind, i, x, &block, cfg.squeeze, &inv_cfg, logdet_cfg.as_ref()))
            .collect();

        fs::create_dir_all(cfg.out.join("recon").join(kind.to_string()))?;
        let mut records = Vec::with_capacity(results.len());
        for (rec, recon) in results {
            if let Some(g) = recon {
                save_image(&g, recon_path(&cfg.out, kind, rec.image))?;
            }
            records.push(rec);
        }
        summaries.push(KindSummary::from_records(
            &kind.to_string(),
            &records,
            cfg.variant == Variant::Invertible,
        ));
        all_records.extend(records);
    }

    let records_path = cfg.out.join("records.jsonl");
    let mut w = BufWriter::new(fs::File::create(&records_path)?);
    for r in &all_records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let summary_path = cfg.out.join("summary.txt");
    fs::write(&summary_path, format_summary(cfg, &summaries, &all_records))?;

    let below_floor = summaries
        .iter()
        .any(|s| s.contract && s.v_score < cfg.v_score_floor);
    Ok(ExperimentOutcome {
        summaries,
        records: all_records,
        exit_code: if below_floor { EXIT_INVARIANT } else { EXIT_OK },
        summary_path,
        records_path,
    })
}

fn process_image<T: Real>(
    kind: AttentionKind,
    index: usize,
    x: &FeatureGrid<T>,
    block: &AttentionBlock<T>,
    squeezed: bool,
    inv_cfg: &InversionConfig,
    logdet_cfg: Option<&LogDetConfig>,
) -> (MetricsRecord, Option<FeatureGrid<T>>) {
    let mut rec = MetricsRecord {
        kind: kind.to_string(),
        image: index,
        mse: None,
        ssim: None,
        converged: false,
        iterations: None,
        final_residual: None,
        error: None,
        logdet_estimate: None,
        logdet_oracle: None,
    };
    let attempt = || -> Result<_> {
        let input = if squeezed { squeeze(x)? } else { x.clone() };
        let (xr, report) = roundtrip_with_output(&input, block, inv_cfg)?;
        let xr = if squeezed { unsqueeze(&xr)? } else { xr };
        Ok((input, xr, report))
    };
    match attempt() {
        Ok((input, xr, report)) => {
            rec.converged = report.converged;
            rec.iterations = Some(report.iterations_used);
            rec.final_residual = Some(report.final_residual);
            rec.mse = compute_mse(x, &xr).ok();
            rec.ssim = compute_ssim(x, &xr).ok();
            if let (Some(ld), Variant::Invertible) = (logdet_cfg, block.variant()) {
                let seeded = LogDetConfig {
                    seed: ld.seed ^ index as u64,
                    ..ld.clone()
                };
                rec.logdet_estimate = logdet_series(block, &input, &seeded).ok().map(|e| e.value);
                if input.len() <= ORACLE_MAX_DIM {
                    match brute_force_logdet(block, &input, ld.jvp_epsilon) {
                        Ok(v) => rec.logdet_oracle = Some(v),
                        Err(e) => rec.error = Some(e.to_string()),
                    }
                }
            }
            (rec, Some(xr))
        }
        Err(e) => {
            rec.error = Some(e.to_string());
            (rec, None)
        }
    }
}

/// Renders the summary table. Contains nothing run-dependent beyond the
/// configuration and the results, so identical runs give identical bytes.
pub fn format_summary(cfg: &ExperimentConfig, summaries: &[KindSummary], records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# variant={} source={} size={} batch={} c={} N={} tol={:e} seed={} precision={} squeeze={}",
        cfg.variant, cfg.source, cfg.size, cfg.batch, cfg.c, cfg.iters, cfg.tol, cfg.seed, cfg.precision, cfg.squeeze
    );
    if cfg.logit_scale != 1.0 || cfg.weight_scale != 1.0 {
        let _ = writeln!(
            s,
            "# stress: logit_scale={} weight_scale={}",
            cfg.logit_scale, cfg.weight_scale
        );
    }
    let _ = writeln!(
        s,
        "{:<16} | {:>11} | {:>7} | {:>7} | {:>9}",
        "kind", "MSE", "SSIM", "V-score", "converged"
    );
    let _ = writeln!(s, "{}", "-".repeat(16 + 11 + 7 + 7 + 9 + 12));
    for k in summaries {
        let label = k
            .kind
            .parse::<AttentionKind>()
            .map(|k| k.label().to_string())
            .unwrap_or_else(|_| k.kind.clone());
        let mse = k.mean_mse.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let ssim = k.mean_ssim.map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = write!(
            s,
            "{:<16} | {:>11} | {:>7} | {:>6.1}% | {:>9}",
            label,
            mse,
            ssim,
            100.0 * k.v_score,
            format!("{}/{}", k.converged, k.images)
        );
        if !k.contract {
            s.push_str("  (no invertibility contract)");
        }
        s.push('\n');
    }
    let failures: Vec<&MetricsRecord> = records.iter().filter(|r| !r.converged || r.error.is_some()).collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\nnot converged:");
        for r in failures {
            let why = match (&r.error, r.iterations, r.final_residual) {
                (Some(e), _, _) => e.clone(),
                (None, Some(n), Some(res)) => format!("{n} iterations, residual {res:.3e}"),
                _ => "no result".into(),
            };
            let _ = writeln!(s, "  {} image {:03}: {why}", r.kind, r.image);
        }
    }
    s
}

/// Path of the reconstruction written for `kind` and `image`.
pub fn recon_path(out: &Path, kind: AttentionKind, image: usize) -> PathBuf {
    out.join("recon").join(kind.to_string()).join(format!("{image:03}.ppm"))
}
