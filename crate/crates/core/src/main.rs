use clap::{Args, Parser, Subcommand};
use invattn::attention::{residual_forward, AttentionKind, FeatureGrid, Variant};
use invattn::harness::{
    exit_code_for, experiment_block, load_image, load_images, run_experiment, run_selftest,
    save_image, ExperimentConfig, Precision, EXIT_INVARIANT, EXIT_OK,
};
use invattn::inversion::{
    block_probe_directions, estimate_lipschitz, fixed_point_invert, mse_255, DomainSampler,
    InversionConfig, SampleDistribution,
};
use invattn::linalg::Real;
use invattn::logdet::{brute_force_logdet, logdet_series, LogDetConfig, ORACLE_MAX_DIM};
use invattn::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "invattn", version, about = "Invertible attention blocks: roundtrip, log-det and Lipschitz diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full reconstruction experiment over every configured kind.
    Run(Common),
    /// Roundtrip a single image through one block.
    Invert {
        #[command(flatten)]
        common: Common,
        /// PPM image to invert; defaults to the first configured image.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Log-det series estimate on one block, checked against the dense oracle.
    Logdet {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        terms: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Empirical Lipschitz constant of one block's residual branch.
    Lipschitz {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
    },
    /// Quick oracle checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attention kind(s), comma separated.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    c: Option<f64>,
    /// Fixed-point iteration cap.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    precision: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("kinds", self.kind.clone()),
            ("variant", self.variant.clone()),
            ("size", self.size.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("c", self.c.map(|v| v.to_string())),
            ("iters", self.iters.map(|v| v.to_string())),
            ("precision", self.precision.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", std::fs::read_to_string(&outcome.summary_path)?);
            Ok(outcome.exit_code)
        }
        Command::Invert { common, image } => {
            let cfg = common.resolve()?;
            match cfg.precision {
                Precision::F64 => invert::<f64>(&cfg, image),
                Precision::F32 => invert::<f32>(&cfg, image),
            }
        }
        Command::Logdet { common, terms, samples } => {
            let cfg = common.resolve()?;
            match cfg.precision {
                Precision::F64 => logdet::<f64>(&cfg, terms, samples),
                Precision::F32 => logdet::<f32>(&cfg, terms, samples),
            }
        }
        Command::Lipschitz { common, pairs } => {
            let cfg = common.resolve()?;
            match cfg.precision {
                Precision::F64 => lipschitz::<f64>(&cfg, pairs),
                Precision::F32 => lipschitz::<f32>(&cfg, pairs),
            }
        }
        Command::Selftest { seed } => {
            let results = run_selftest(seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_INVARIANT })
        }
    }
}

fn first_kind(cfg: &ExperimentConfig) -> AttentionKind {
    cfg.kinds[0]
}

fn invert<T: Real>(cfg: &ExperimentConfig, image: Option<PathBuf>) -> Result<i32> {
    cfg.validate()?;
    let x: FeatureGrid<T> = match image {
        Some(p) => load_image(p)?,
        None => load_images(&ExperimentConfig { batch: 1, ..cfg.clone() })?.remove(0),
    };
    let block = experiment_block::<T>(cfg, first_kind(cfg))?;
    let z = residual_forward(&x, &block)?;
    let inv = InversionConfig {
        max_iters: cfg.iters,
        early_stop_tol: cfg.tol,
        record_trace: true,
    };
    let (xr, mut report) = fixed_point_invert(&z, &block.branch(), &inv)?;
    report.reconstruction_mse = Some(mse_255(&x, &xr)?);
    std::fs::create_dir_all(&cfg.out)?;
    save_image(&xr, cfg.out.join("invert.ppm"))?;
    println!("{}", serde_json::to_string(&report)?);
    let ok = report.converged || block.variant() == Variant::NonInvertible;
    Ok(if ok { EXIT_OK } else { EXIT_INVARIANT })
}

fn logdet<T: Real>(cfg: &ExperimentConfig, terms: usize, samples: usize) -> Result<i32> {
    let block = experiment_block::<T>(cfg, first_kind(cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = FeatureGrid::<T>::random_unit(block.channels(), cfg.size, cfg.size, &mut rng);
    let ld = LogDetConfig {
        seed: cfg.seed,
        ..cfg
            .logdet
            .clone()
            .unwrap_or_else(LogDetConfig::for_precision::<T>)
            .with_terms(terms, samples)
    };
    let est = logdet_series(&block, &x, &ld)?;
    println!("{}", serde_json::to_string(&est)?);
    if x.len() <= ORACLE_MAX_DIM {
        let oracle = brute_force_logdet(&block, &x, ld.jvp_epsilon)?;
        let rel = (est.value - oracle).abs() / oracle.abs();
        println!("oracle {oracle:.6} relative error {rel:.3e}");
    } else {
        println!("oracle skipped: d = {} exceeds {ORACLE_MAX_DIM}", x.len());
    }
    Ok(EXIT_OK)
}

fn lipschitz<T: Real>(cfg: &ExperimentConfig, pairs: usize) -> Result<i32> {
    let block = experiment_block::<T>(cfg, first_kind(cfg))?;
    let shape = (block.channels(), cfg.size, cfg.size);
    let sampler = DomainSampler::new(shape, SampleDistribution::UnitUniform)
        .with_directions(block_probe_directions(&block, cfg.size, cfg.size)?);
    let est = estimate_lipschitz(&block.branch(), &sampler, pairs, cfg.seed)?;
    println!("{}", serde_json::to_string(&est)?);
    Ok(EXIT_OK)
}
