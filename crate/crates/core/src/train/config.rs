use std::path::PathBuf;

use crate::config::KvConfig;
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Scratch,
    Pretrain,
    Finetune,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Scratch => "scratch",
            TrainMode::Pretrain => "pretrain",
            TrainMode::Finetune => "finetune",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(TrainMode::Scratch),
            "pretrain" => Ok(TrainMode::Pretrain),
            "finetune" => Ok(TrainMode::Finetune),
            _ => Err(Error::Config(format!("unknown training mode `{s}`"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip: Option<f64>,
    /// Starting weights; required for fine-tuning.
    pub checkpoint_in: Option<PathBuf>,
}

impl TrainConfig {
    pub fn for_mode(mode: TrainMode) -> Self {
        let finetune = mode == TrainMode::Finetune;
        Self {
            mode,
            lr: if finetune { 5e-6 } else { 1e-4 },
            schedule: Schedule::Cosine,
            epochs: if finetune { 100 } else { 2000 },
            batch_size: 64,
            patience: if finetune { 10 } else { 20 },
            seed: 0,
            clip: Some(1.0),
            checkpoint_in: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("train.clip must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    /// Override from `train.*` keys. Defaults for the mode apply first, so
    /// `train.mode = finetune` alone selects the fine-tuning schedule.
    pub fn from_config(cfg: &KvConfig, mode: Option<TrainMode>) -> Result<Self> {
        let mode = match mode {
            Some(m) => m,
            None => TrainMode::from_name(cfg.str_or("train.mode", "scratch"))?,
        };
        let d = Self::for_mode(mode);
        let section = mode.name();
        let pick = |key: &str| -> String {
            let specific = format!("train.{section}.{key}");
            if cfg.contains(&specific) {
                specific
            } else {
                format!("train.{key}")
            }
        };
        let schedule = match cfg.str_or(&pick("schedule"), "cosine") {
            "cosine" => Schedule::Cosine,
            "constant" => Schedule::Constant,
            other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
        };
        let clip = cfg.f64_or(&pick("clip"), d.clip.unwrap_or(0.0))?;
        let out = Self {
            mode,
            lr: cfg.f64_or(&pick("lr"), d.lr)?,
            schedule,
            epochs: cfg.usize_or(&pick("epochs"), d.epochs)?,
            batch_size: cfg.usize_or(&pick("batch_size"), d.batch_size)?,
            patience: cfg.usize_or(&pick("patience"), d.patience)?,
            seed: cfg.u64_or(&pick("seed"), cfg.u64_or("seed", d.seed)?)?,
            clip: (clip > 0.0).then_some(clip),
            checkpoint_in: cfg.get(&pick("checkpoint")).map(PathBuf::from),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn write_config(&self, cfg: &mut KvConfig) {
        let p = format!("train.{}", self.mode.name());
        cfg.set(&format!("{p}.lr"), self.lr);
        cfg.set(
            &format!("{p}.schedule"),
            match self.schedule {
                Schedule::Cosine => "cosine",
                Schedule::Constant => "constant",
            },
        );
        cfg.set(&format!("{p}.epochs"), self.epochs);
        cfg.set(&format!("{p}.batch_size"), self.batch_size);
        cfg.set(&format!("{p}.patience"), self.patience);
        cfg.set(&format!("{p}.seed"), self.seed);
        cfg.set(&format!("{p}.clip"), self.clip.unwrap_or(0.0));
        if let Some(c) = &self.checkpoint_in {
            cfg.set(&format!("{p}.checkpoint"), c.display());
        }
    }
}
