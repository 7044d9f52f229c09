use super::{apply_1x1_conv, response_map, FeatureGrid, Normalization, PhiActivation, SpectralLinear};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};
use crate::map::GridMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionKind {
    Gaussian,
    EmbeddedGaussian,
    DotProduct,
    Concatenation,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 4] = [
        AttentionKind::Gaussian,
        AttentionKind::EmbeddedGaussian,
        AttentionKind::DotProduct,
        AttentionKind::Concatenation,
    ];

    pub fn has_embeddings(self) -> bool {
        self != AttentionKind::Gaussian
    }

    /// Row label used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            AttentionKind::Gaussian => "Gaussian",
            AttentionKind::EmbeddedGaussian => "Embed. Gaussian",
            AttentionKind::DotProduct => "Dot-product",
            AttentionKind::Concatenation => "Concatenation",
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::Gaussian => "gaussian",
            AttentionKind::EmbeddedGaussian => "embedded-gaussian",
            AttentionKind::DotProduct => "dot-product",
            AttentionKind::Concatenation => "concatenation",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "gaus" => Ok(AttentionKind::Gaussian),
            "embedded-gaussian" | "embedded" | "embed" => Ok(AttentionKind::EmbeddedGaussian),
            "dot-product" | "dot" => Ok(AttentionKind::DotProduct),
            "concatenation" | "concat" => Ok(AttentionKind::Concatenation),
            other => Err(format!("unknown attention kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    NonInvertible,
    #[default]
    Invertible,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::NonInvertible => "non-invertible",
            Variant::Invertible => "invertible",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "invertible" | "inv" => Ok(Variant::Invertible),
            "non-invertible" | "noninvertible" | "plain" => Ok(Variant::NonInvertible),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

/// Everything needed to build an [`AttentionBlock`] deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub kind: AttentionKind,
    pub variant: Variant,
    pub channels: usize,
    /// Embedding width for `W₁`, `W₂`; defaults to `max(channels / 2, 1)`.
    pub embed_dim: Option<usize>,
    /// Lipschitz target for the focus conv and `W_L`.
    pub c: f64,
    pub phi: PhiActivation,
    /// Multiplies every response logit before exponentiation / `φ`.
    pub logit_scale: f64,
    pub normalization: Normalization,
    /// Also bound `W₁`, `W₂` by `c`.
    pub constrain_embeddings: bool,
    pub seed: u64,
}

impl BlockConfig {
    pub fn new(kind: AttentionKind, variant: Variant, channels: usize) -> Self {
        Self {
            kind,
            variant,
            channels,
            embed_dim: None,
            c: 0.9,
            phi: PhiActivation::default(),
            logit_scale: 1.0,
            normalization: Normalization::default(),
            constrain_embeddings: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn embedding_width(&self) -> usize {
        self.embed_dim.unwrap_or((self.channels / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.embed_dim == Some(0) {
            return Err(Error::Config("embedding width must be positive".into()));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Config(format!("Lipschitz target c={} outside (0, 1)", self.c)));
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(Error::Config(format!("logit scale {} must be positive", self.logit_scale)));
        }
        if let Normalization::Columns { target } = self.normalization {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::Config(format!("column target {target} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// One residual attention block `f(x) = x + W_L·R(x)·F(x)` (invertible) or
/// `f(x) = x + R(x)·F(x)` (non-invertible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AttentionBlock<T = f64> {
    config: BlockConfig,
    focus: SpectralLinear<T>,
    w1: Option<SpectralLinear<T>>,
    w2: Option<SpectralLinear<T>>,
    w3: Option<Matrix<T>>,
    wl: Option<SpectralLinear<T>>,
}

const BLOCK_FORMAT: &str = "invattn-block";
const BLOCK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct BlockFile<T: Real> {
    format: String,
    version: u32,
    precision: String,
    block: AttentionBlock<T>,
}

impl<T: Real> AttentionBlock<T> {
    /// Builds a block with fresh seeded weights, already normalized.
    ///
    /// Weights are uniform in `[-1/√fan_in, 1/√fan_in]`. In the invertible
    /// variant the focus conv and `W_L` are bounded by `c`.
    pub fn new(config: BlockConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ch = config.channels;
        let c = T::lit(config.c);
        let invertible = config.variant == Variant::Invertible;
        let mut seeds = {
            let base = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            (1u64..).map(move |i| base ^ i)
        };

        let mut linear = |out_dim: usize, in_dim: usize, bounded: bool, rng: &mut ChaCha8Rng| {
            let w = SpectralLinear::init_uniform(out_dim, in_dim, rng);
            let seed = seeds.next().expect("infinite");
            if bounded {
                SpectralLinear::constrained(w, c, seed)
            } else {
                Ok(SpectralLinear::unconstrained(w))
            }
        };

        let focus = linear(ch, ch, invertible, &mut rng)?;
        let (w1, w2, w3) = if config.kind.has_embeddings() {
            let e = config.embedding_width();
            let bound = config.constrain_embeddings;
            let w1 = linear(e, ch, bound, &mut rng)?;
            let w2 = linear(e, ch, bound, &mut rng)?;
            let w3 = (config.kind == AttentionKind::Concatenation)
                .then(|| SpectralLinear::init_uniform(1, 2 * e, &mut rng));
            (Some(w1), Some(w2), w3)
        } else {
            (None, None, None)
        };
        let wl = if invertible {
            Some(linear(ch, ch, true, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            config,
            focus,
            w1,
            w2,
            w3,
            wl,
        })
    }

    /// Assembles a block from explicit weights. The kind decides which of
    /// `w1`, `w2`, `w3` must be present; the invertible variant requires `wl`.
    pub fn from_parts(
        config: BlockConfig,
        focus: SpectralLinear<T>,
        embeddings: Option<(SpectralLinear<T>, SpectralLinear<T>)>,
        w3: Option<Matrix<T>>,
        wl: Option<SpectralLinear<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let (w1, w2) = match embeddings {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        let block = Self {
            config,
            focus,
            w1,
            w2,
            w3,
            wl,
        };
        block.check_consistency()?;
        Ok(block)
    }

    fn check_consistency(&self) -> Result<()> {
        let kind = self.config.kind;
        let ch = self.config.channels;
        let embeds = self.w1.is_some() && self.w2.is_some();
        let ok = match kind {
            AttentionKind::Gaussian => self.w1.is_none() && self.w2.is_none() && self.w3.is_none(),
            AttentionKind::EmbeddedGaussian | AttentionKind::DotProduct => embeds && self.w3.is_none(),
            AttentionKind::Concatenation => embeds && self.w3.is_some(),
        };
        if !ok {
            return Err(Error::Contract(format!("weights inconsistent with kind {kind}")));
        }
        if self.focus.in_dim() != ch || self.focus.out_dim() != ch {
            return Err(Error::domain("focus conv must map channels to channels"));
        }
        if let (Some(a), Some(b)) = (&self.w1, &self.w2) {
            if a.in_dim() != ch || b.in_dim() != ch || a.out_dim() != b.out_dim() {
                return Err(Error::domain("embedding convs must share shape E x channels"));
            }
        }
        match (&self.wl, self.config.variant) {
            (None, Variant::Invertible) => {
                Err(Error::Contract("invertible block requires W_L".into()))
            }
            (Some(wl), _) if wl.in_dim() != ch || wl.out_dim() != ch => {
                Err(Error::domain("W_L must map channels to channels"))
            }
            _ => Ok(()),
        }
    }

    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    pub fn kind(&self) -> AttentionKind {
        self.config.kind
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    pub fn focus(&self) -> &SpectralLinear<T> {
        &self.focus
    }

    pub fn embeddings(&self) -> Result<(&SpectralLinear<T>, &SpectralLinear<T>)> {
        match (&self.w1, &self.w2) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Contract(format!("{} block has no embeddings", self.kind()))),
        }
    }

    pub fn pair_scorer(&self) -> Option<&Matrix<T>> {
        self.w3.as_ref()
    }

    pub fn output_conv(&self) -> Option<&SpectralLinear<T>> {
        self.wl.as_ref()
    }

    /// Runs spectral normalization on every bounded weight.
    pub fn renormalize(&mut self) -> Result<()> {
        self.focus.normalize()?;
        for w in [&mut self.w1, &mut self.w2, &mut self.wl].into_iter().flatten() {
            w.normalize()?;
        }
        Ok(())
    }

    /// Multiplies the effective focus and `W_L` weights by `factor` after
    /// normalization, breaking the Lipschitz bound on purpose.
    pub fn break_bound(&mut self, factor: T) {
        self.focus.scale_effective(factor);
        if let Some(wl) = &mut self.wl {
            wl.scale_effective(factor);
        }
    }

    pub fn set_logit_scale(&mut self, scale: f64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.logit_scale = scale;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    fn check_input(&self, x: &FeatureGrid<T>) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::domain(format!(
                "block expects {} channels, input has {}",
                self.channels(),
                x.channels()
            )));
        }
        if x.positions() == 0 {
            return Err(Error::domain("empty input grid"));
        }
        Ok(())
    }

    /// Residual branch `g(x)`: `W_L·A(x)` or `A(x)`.
    pub fn residual_branch(&self, x: &FeatureGrid<T>) -> Result<FeatureGrid<T>> {
        let a = attention_apply(x, self)?;
        match (&self.wl, self.variant()) {
            (Some(wl), Variant::Invertible) => apply_1x1_conv(&a, wl),
            _ => Ok(a),
        }
    }

    pub fn branch(&self) -> ResidualBranch<'_, T> {
        ResidualBranch(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BlockFile {
            format: BLOCK_FORMAT.to_string(),
            version: BLOCK_FORMAT_VERSION,
            precision: T::NAME.to_string(),
            block: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(text)?;
        let field = |k: &str| header.get(k).cloned().unwrap_or(serde_json::Value::Null);
        if field("format") != BLOCK_FORMAT {
            return Err(Error::Config("not an invattn block file".into()));
        }
        if field("version") != BLOCK_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported block file version {}", field("version"))));
        }
        if field("precision") != T::NAME {
            return Err(Error::Config(format!(
                "block file precision {} does not match {}",
                field("precision"),
                T::NAME
            )));
        }
        let file: BlockFile<T> = serde_json::from_value(header)?;
        file.block.config.validate()?;
        file.block.check_consistency()?;
        Ok(file.block)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The residual branch of a block viewed as a [`GridMap`].
#[derive(Debug, Clone, Copy)]
pub struct ResidualBranch<'a, T: Real>(pub &'a AttentionBlock<T>);

impl<T: Real> GridMap<T> for ResidualBranch<'_, T> {
    fn eval(&self, x: &FeatureGrid<T>) -> Result<FeatureGrid<T>> {
        self.0.residual_branch(x)
    }
}

/// `A(x) = R(x)·F(x)` over the positions × channels view.
pub fn attention_apply<T: Real>(x: &FeatureGrid<T>, block: &AttentionBlock<T>) -> Result<FeatureGrid<T>> {
    block.check_input(x)?;
    let r = response_map(x, block)?;
    let f = block.focus.apply_rows(&x.to_matrix())?;
    let a = r.entries().matmul(&f)?;
    FeatureGrid::from_matrix(a, x.height(), x.width())
}

/// Block output `x + g(x)`.
pub fn residual_forward<T: Real>(x: &FeatureGrid<T>, block: &AttentionBlock<T>) -> Result<FeatureGrid<T>> {
    x.add(&block.residual_branch(x)?)
}
