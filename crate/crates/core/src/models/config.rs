use crate::config::KvConfig;
use crate::error::{Error, Result};

/// Slots of the optional time embedding: one per 10-minute step of the day.
pub const TIME_SLOTS: usize = 144;

/// Decoder-only transformer over univariate patch tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TimerConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub ffn_hidden: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Patch length S.
    pub patch: usize,
    /// Tokens of history used to predict the next one.
    pub context_tokens: usize,
    pub use_time_embedding: bool,
}

impl TimerConfig {
    /// The published scale: 8 blocks, d = 1024, FFN 2048, 8 heads.
    pub fn published() -> Self {
        Self {
            layers: 8,
            model_dim: 1024,
            ffn_hidden: 2048,
            heads: 8,
            dropout: 0.1,
            patch: 96,
            context_tokens: 7,
            use_time_embedding: false,
        }
    }

    /// Desk-scale model used by tests and the demo.
    pub fn tiny() -> Self {
        Self {
            layers: 2,
            model_dim: 32,
            ffn_hidden: 64,
            heads: 4,
            dropout: 0.0,
            patch: 8,
            context_tokens: 3,
            use_time_embedding: false,
        }
    }

    /// Longest token sequence the position table covers.
    pub fn max_tokens(&self) -> usize {
        self.context_tokens + 1
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.layers >= 1
            && self.model_dim >= 1
            && self.ffn_hidden >= 1
            && self.heads >= 1
            && self.model_dim % self.heads == 0
            && (0.0..1.0).contains(&self.dropout)
            && self.patch >= 1
            && self.context_tokens >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid transformer config {self:?}")))
        }
    }

    pub(crate) fn write_config(&self, cfg: &mut KvConfig, prefix: &str) {
        cfg.set(&format!("{prefix}.layers"), self.layers);
        cfg.set(&format!("{prefix}.model_dim"), self.model_dim);
        cfg.set(&format!("{prefix}.ffn_hidden"), self.ffn_hidden);
        cfg.set(&format!("{prefix}.heads"), self.heads);
        cfg.set(&format!("{prefix}.dropout"), self.dropout);
        cfg.set(&format!("{prefix}.patch"), self.patch);
        cfg.set(&format!("{prefix}.context_tokens"), self.context_tokens);
        cfg.set(&format!("{prefix}.time_embedding"), self.use_time_embedding);
    }

    pub(crate) fn apply_config(mut self, cfg: &KvConfig, prefix: &str) -> Result<Self> {
        let k = |name: &str| format!("{prefix}.{name}");
        self.layers = cfg.usize_or(&k("layers"), self.layers)?;
        self.model_dim = cfg.usize_or(&k("model_dim"), self.model_dim)?;
        self.ffn_hidden = cfg.usize_or(&k("ffn_hidden"), self.ffn_hidden)?;
        self.heads = cfg.usize_or(&k("heads"), self.heads)?;
        self.dropout = cfg.f64_or(&k("dropout"), self.dropout)?;
        self.patch = cfg.usize_or(&k("patch"), self.patch)?;
        self.context_tokens = cfg.usize_or(&k("context_tokens"), self.context_tokens)?;
        self.use_time_embedding = cfg.bool_or(&k("time_embedding"), self.use_time_embedding)?;
        self.validate()?;
        Ok(self)
    }
}

/// Channel-dependent decoder: each token is the `C·S` concatenation of one
/// patch from every channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineTransformerConfig {
    pub decoder: TimerConfig,
    pub channels: usize,
}

impl BaselineTransformerConfig {
    pub fn published() -> Self {
        Self {
            decoder: TimerConfig::published(),
            channels: 4,
        }
    }

    /// Transformer-mini: 4 blocks, d = 256, FFN 512.
    pub fn mini() -> Self {
        Self {
            decoder: TimerConfig {
                layers: 4,
                model_dim: 256,
                ffn_hidden: 512,
                ..TimerConfig::published()
            },
            channels: 4,
        }
    }

    pub fn token_width(&self) -> usize {
        self.channels * self.decoder.patch
    }

    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        if self.channels == 0 {
            return Err(Error::Config("transformer channels must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub layers: usize,
    pub dropout: f64,
    pub input_dim: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_units: 128,
            layers: 3,
            dropout: 0.1,
            input_dim: 4,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.layers == 0 || self.input_dim == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("invalid LSTM config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Timer,
    Transformer,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Timer => "timer",
            ModelKind::Transformer => "transformer",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "timer" => Ok(ModelKind::Timer),
            "transformer" => Ok(ModelKind::Transformer),
            "lstm" => Ok(ModelKind::Lstm),
            _ => Err(Error::Config(format!("unknown model kind `{s}` (timer, transformer, lstm)"))),
        }
    }
}

/// Architecture and hyperparameters of any supported model.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Timer(TimerConfig),
    Transformer(BaselineTransformerConfig),
    Lstm(LstmConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Timer(_) => ModelKind::Timer,
            ModelConfig::Transformer(_) => ModelKind::Transformer,
            ModelConfig::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Timer(c) => c.validate(),
            ModelConfig::Transformer(c) => c.validate(),
            ModelConfig::Lstm(c) => c.validate(),
        }
    }

    /// Write under `model.*`.
    pub fn write_config(&self, cfg: &mut KvConfig) {
        cfg.set("model.kind", self.kind().name());
        match self {
            ModelConfig::Timer(c) => c.write_config(cfg, "model"),
            ModelConfig::Transformer(c) => {
                c.decoder.write_config(cfg, "model");
                cfg.set("model.channels", c.channels);
            }
            ModelConfig::Lstm(c) => {
                cfg.set("model.hidden_units", c.hidden_units);
                cfg.set("model.layers", c.layers);
                cfg.set("model.dropout", c.dropout);
                cfg.set("model.input_dim", c.input_dim);
            }
        }
    }

    /// Read `model.*`; unspecified fields take the defaults of `kind`
    /// (published scale for Timer and Transformer).
    pub fn from_config(cfg: &KvConfig, default_kind: ModelKind) -> Result<Self> {
        let kind = match cfg.get("model.kind") {
            Some(k) => ModelKind::from_name(k)?,
            None => default_kind,
        };
        Self::from_config_as(cfg, kind)
    }

    pub fn from_config_as(cfg: &KvConfig, kind: ModelKind) -> Result<Self> {
        let out = match kind {
            ModelKind::Timer => ModelConfig::Timer(TimerConfig::published().apply_config(cfg, "model")?),
            ModelKind::Transformer => {
                let base = BaselineTransformerConfig::published();
                ModelConfig::Transformer(BaselineTransformerConfig {
                    decoder: base.decoder.apply_config(cfg, "model")?,
                    channels: cfg.usize_or("model.channels", base.channels)?,
                })
            }
            ModelKind::Lstm => {
                let d = LstmConfig::default();
                ModelConfig::Lstm(LstmConfig {
                    hidden_units: cfg.usize_or("model.hidden_units", d.hidden_units)?,
                    layers: cfg.usize_or("model.layers", d.layers)?,
                    dropout: cfg.f64_or("model.dropout", d.dropout)?,
                    input_dim: cfg.usize_or("model.input_dim", d.input_dim)?,
                })
            }
        };
        out.validate()?;
        Ok(out)
    }

    pub fn dropout(&self) -> f64 {
        match self {
            ModelConfig::Timer(c) => c.dropout,
            ModelConfig::Transformer(c) => c.decoder.dropout,
            ModelConfig::Lstm(c) => c.dropout,
        }
    }
}
