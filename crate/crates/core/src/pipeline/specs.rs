//! Desk-scale defaults and named model specs.
//!
//! A spec is a model plus its training recipe, configured under
//! `spec.<name>.*`. Those keys override the top-level `model.*` and
//! `train.*` keys for that model only:
//!
//! ```text
//! model.model_dim = 32
//! spec.lstm.model.kind = lstm
//! spec.lstm.train.lr = 3e-3
//! spec.lstm.train_length = 192
//! ```

use std::collections::BTreeSet;

use crate::autodiff::ParamSet;
use crate::clean::DEFAULT_WINDOW;
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::eval::{ModelSpec, EVAL_CONTEXT};
use crate::models::{ModelConfig, ModelKind};
use crate::train::{NormScope, TrainConfig, TrainMode};

const DESK: &str = "
seed = 0
threads = 1

synth.turbines = 6
synth.days = 120

dataset.window = 768
dataset.split = 6,3,3
dataset.stride.train = 100
dataset.stride.validation = 100
dataset.stride.test = 48

model.kind = timer
model.layers = 2
model.model_dim = 32
model.ffn_hidden = 64
model.heads = 4
model.dropout = 0
model.patch = 96
model.context_tokens = 7
model.time_embedding = false
model.hidden_units = 32

train.lr = 1e-3
train.epochs = 100
train.batch_size = 32
train.patience = 10
train.pretrain.epochs = 60
train.pretrain.patience = 20
train.finetune.lr = 5e-6
train.finetune.epochs = 100
train.finetune.patience = 10

pretrain.spec = timer
pretrain.regimes = ar,seasonal,switching
pretrain.samples_per_regime = 400
pretrain.source.enabled = true
pretrain.source.turbines = 6
pretrain.source.days = 365
pretrain.source.stride = 24

spec.timer-finetune.model.kind = timer
spec.timer-finetune.mode = finetune
spec.timer.model.kind = timer
spec.timer.mode = scratch
spec.lstm.model.kind = lstm
spec.lstm.model.layers = 2
spec.lstm.mode = scratch
spec.lstm.train.lr = 3e-3
spec.lstm.train_length = 192
spec.transformer-mini.model.kind = transformer
spec.transformer-mini.model.layers = 2
spec.transformer-mini.mode = scratch

eval.horizons = 1,6,12,24,48,96
eval.context = 672
eval.models = timer-finetune,timer,lstm

ablate.fractions = 0.1,0.25,0.5,1
ablate.models = timer-finetune,timer,lstm

one_turbine.turbines = T01,T02,T03
one_turbine.models = timer-finetune,timer,lstm
";

/// Tiny-model settings every command starts from; config files, environment
/// variables and flags layer on top.
pub fn desk_defaults() -> KvConfig {
    KvConfig::parse(DESK).expect("built-in defaults parse")
}

/// A resolved spec, ready to train.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedSpec {
    pub name: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_length: usize,
    pub norm: NormScope,
}

impl NamedSpec {
    pub fn model_spec(&self, init: Option<ParamSet>) -> ModelSpec {
        ModelSpec {
            id: self.name.clone(),
            config: self.model.clone(),
            train: self.train.clone(),
            init,
            train_length: self.train_length,
            norm: self.norm,
        }
    }
}

/// Names with at least one `spec.<name>.*` key.
pub fn spec_names(cfg: &KvConfig) -> Vec<String> {
    cfg.keys()
        .filter_map(|k| k.strip_prefix("spec.")?.split_once('.').map(|(n, _)| n.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Resolve `spec.<name>.*` over the top-level keys. `mode` overrides the
/// spec's own `mode` key.
pub fn resolve_spec(cfg: &KvConfig, name: &str, mode: Option<TrainMode>) -> Result<NamedSpec> {
    let own = cfg.section(&format!("spec.{name}"));
    if own.keys().next().is_none() {
        return Err(Error::Config(format!(
            "unknown model spec `{name}` (configured: {})",
            spec_names(cfg).join(", ")
        )));
    }
    let mut merged = cfg.clone();
    merged.merge(&own);
    let mode = match mode {
        Some(m) => m,
        None => TrainMode::from_name(merged.str_or("mode", "scratch"))?,
    };
    let model = ModelConfig::from_config(&merged, ModelKind::Timer)?;
    let train = TrainConfig::from_config(&merged, Some(mode))?;
    let train_length = merged.usize_or("train_length", merged.usize_or("dataset.window", DEFAULT_WINDOW)?)?;
    let norm = match merged.str_or("norm", "window") {
        "window" => NormScope::Window,
        "context" => NormScope::Prefix(merged.usize_or("eval.context", EVAL_CONTEXT)?),
        other => return Err(Error::Config(format!("spec {name}: unknown norm `{other}` (window or context)"))),
    };
    Ok(NamedSpec {
        name: name.to_string(),
        model,
        train,
        train_length,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = desk_defaults();
        assert_eq!(spec_names(&cfg), ["lstm", "timer", "timer-finetune", "transformer-mini"]);
        let ft = resolve_spec(&cfg, "timer-finetune", None).unwrap();
        assert_eq!(ft.train.mode, TrainMode::Finetune);
        assert_eq!(ft.train.lr, 5e-6);
        assert_eq!(ft.train_length, 768);
        let lstm = resolve_spec(&cfg, "lstm", None).unwrap();
        assert_eq!(lstm.model.kind(), ModelKind::Lstm);
        assert_eq!(lstm.train.lr, 3e-3);
        assert_eq!(lstm.train_length, 192);
        for name in spec_names(&cfg) {
            resolve_spec(&cfg, &name, None).unwrap();
        }
    }

    #[test]
    fn spec_keys_override_only_their_spec() {
        let mut cfg = desk_defaults();
        cfg.set("spec.timer.model.model_dim", 16);
        let t = resolve_spec(&cfg, "timer", None).unwrap();
        let f = resolve_spec(&cfg, "timer-finetune", None).unwrap();
        assert!(matches!(t.model, ModelConfig::Timer(ref c) if c.model_dim == 16));
        assert!(matches!(f.model, ModelConfig::Timer(ref c) if c.model_dim == 32));
    }

    #[test]
    fn unknown_spec_is_a_config_error() {
        let err = resolve_spec(&desk_defaults(), "gru", None).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("gru"));
    }
}
