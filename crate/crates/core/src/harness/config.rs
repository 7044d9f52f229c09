//! Experiment configuration: a flat `key = value` file plus overrides.

use crate::attention::{AttentionKind, Normalization, PhiActivation, Variant};
use crate::error::{Error, Result};
use crate::logdet::{LogDetConfig, ProbeDistribution};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Largest supported image side; the response map has `(H·W)²` entries.
pub const MAX_IMAGE_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticPattern {
    Gradient,
    Checkerboard,
    GaussianNoise,
}

impl fmt::Display for SyntheticPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticPattern::Gradient => "gradient",
            SyntheticPattern::Checkerboard => "checkerboard",
            SyntheticPattern::GaussianNoise => "gaussian-noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageSource {
    /// Every `*.ppm` in the directory, in file-name order.
    Directory(PathBuf),
    Synthetic(SyntheticPattern),
}

impl fmt::Display for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSource::Directory(p) => write!(f, "dir:{}", p.display()),
            ImageSource::Synthetic(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for ImageSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(dir) = s.strip_prefix("dir:") {
            return Ok(ImageSource::Directory(PathBuf::from(dir)));
        }
        match s.to_ascii_lowercase().as_str() {
            "gradient" => Ok(ImageSource::Synthetic(SyntheticPattern::Gradient)),
            "checkerboard" => Ok(ImageSource::Synthetic(SyntheticPattern::Checkerboard)),
            "gaussian-noise" | "noise" => Ok(ImageSource::Synthetic(SyntheticPattern::GaussianNoise)),
            other => Err(Error::Config(format!(
                "unknown image source '{other}' (gradient, checkerboard, gaussian-noise or dir:<path>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f32" | "32" | "single" => Ok(Precision::F32),
            "f64" | "64" | "double" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kinds: Vec<AttentionKind>,
    pub variant: Variant,
    pub source: ImageSource,
    /// Side of synthetic images.
    pub size: usize,
    /// Number of images per kind.
    pub batch: usize,
    pub c: f64,
    /// Fixed-point iteration cap `N`.
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub precision: Precision,
    /// Squeeze 2×2 patches into channels before the block.
    pub squeeze: bool,
    pub phi: PhiActivation,
    pub normalization: Normalization,
    /// Stress knob: multiplies the response logits.
    pub logit_scale: f64,
    /// Stress knob: scales the bounded weights after normalization.
    pub weight_scale: f64,
    /// Exit nonzero if an invertible kind's V-score falls below this.
    pub v_score_floor: f64,
    /// Log-det estimation per image; the dense oracle runs when the grid is
    /// small enough.
    pub logdet: Option<LogDetConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kinds: AttentionKind::ALL.to_vec(),
            variant: Variant::Invertible,
            source: ImageSource::Synthetic(SyntheticPattern::Checkerboard),
            size: 16,
            batch: 8,
            c: 0.9,
            iters: 100,
            tol: 1e-10,
            seed: 0,
            out: PathBuf::from("out"),
            precision: Precision::F64,
            squeeze: false,
            phi: PhiActivation::default(),
            normalization: Normalization::default(),
            logit_scale: 1.0,
            weight_scale: 1.0,
            v_score_floor: 1.0,
            logdet: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `key = value` file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
        }
        fn named<V: FromStr<Err = E>, E: fmt::Display>(value: &str) -> Result<V> {
            value.parse().map_err(|e: E| Error::Config(e.to_string()))
        }
        match key {
            "kinds" | "kind" => {
                self.kinds = value
                    .split(',')
                    .map(|k| named::<AttentionKind, _>(k))
                    .collect::<Result<_>>()?
            }
            "variant" => self.variant = named(value)?,
            "source" => self.source = value.parse()?,
            "size" => self.size = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "iters" => self.iters = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "precision" => self.precision = value.parse()?,
            "squeeze" => self.squeeze = num(key, value)?,
            "phi" => self.phi = named(value)?,
            "normalization" => self.normalization = named(value)?,
            "logit_scale" => self.logit_scale = num(key, value)?,
            "weight_scale" => self.weight_scale = num(key, value)?,
            "v_score_floor" => self.v_score_floor = num(key, value)?,
            "logdet" => {
                let on: bool = num(key, value)?;
                self.logdet = on.then(|| self.logdet.clone().unwrap_or_default());
            }
            "logdet_terms" => self.logdet_mut().series_terms = num(key, value)?,
            "logdet_samples" => self.logdet_mut().hutchinson_samples = num(key, value)?,
            "logdet_epsilon" => self.logdet_mut().jvp_epsilon = num(key, value)?,
            "logdet_probes" => self.logdet_mut().probe_distribution = value.parse::<ProbeDistribution>()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    fn logdet_mut(&mut self) -> &mut LogDetConfig {
        self.logdet.get_or_insert_with(LogDetConfig::default)
    }

    pub fn channels(&self) -> usize {
        if self.squeeze {
            12
        } else {
            3
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.kinds.is_empty() {
            return bad("no attention kinds selected".into());
        }
        if self.size < 8 || self.size > MAX_IMAGE_SIZE {
            return bad(format!("image size {} outside 8..={MAX_IMAGE_SIZE}", self.size));
        }
        if self.squeeze && self.size % 2 != 0 {
            return bad(format!("squeeze needs an even image size, got {}", self.size));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c = {} outside (0, 1)", self.c));
        }
        if self.iters == 0 {
            return bad("iters must be at least 1".into());
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad(format!("tol = {} must be finite and nonnegative", self.tol));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return bad(format!("logit_scale = {} must be positive", self.logit_scale));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return bad(format!("weight_scale = {} must be positive", self.weight_scale));
        }
        if !(0.0..=1.0).contains(&self.v_score_floor) {
            return bad(format!("v_score_floor = {} outside [0, 1]", self.v_score_floor));
        }
        if let Some(ld) = &self.logdet {
            ld.validate()?;
        }
        Ok(())
    }
}
