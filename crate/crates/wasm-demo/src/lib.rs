//! Browser bindings for `www/index.html`.
//!
//! ```text
//! cargo build -p windtimer-wasm --release --target wasm32-unknown-unknown
//! wasm-bindgen --target web --out-dir crates/wasm-demo/pkg \
//!     target/wasm32-unknown-unknown/release/windtimer_wasm.wasm
//! python3 -m http.server -d crates/wasm-demo   # open /www/
//! ```

use wasm_bindgen::prelude::*;
use windtimer::autodiff::ParamSet;
use windtimer::clean::{clean_frame, CleanConfig, Reason};
use windtimer::inference::{forecast, ForecastRequest};
use windtimer::models::{init_params, ModelConfig, TimerConfig};
use windtimer::series::{tokenize, S3Sequence};
use windtimer::synth::{cleaning_score, generate_plant, SynthConfig, TruthLabel};
use windtimer::train::{evaluate_loss, pretrain_corpus, timer_dataset, train, Dataset, Regime, Schedule, TrainConfig, TrainMode};

fn js_err(e: windtimer::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Reason codes in [`CleanView::codes`]: 0 is kept, then one per reason.
fn reason_code(r: Option<Reason>) -> u8 {
    match r {
        None => 0,
        Some(r) => 1 + Reason::ALL.iter().position(|&x| x == r).expect("listed reason") as u8,
    }
}

#[wasm_bindgen]
pub fn reason_names() -> Vec<String> {
    std::iter::once("KEEP".to_string())
        .chain(Reason::ALL.iter().map(|r| r.name().to_string()))
        .collect()
}

/// One synthetic turbine after cleaning.
#[wasm_bindgen]
pub struct CleanView {
    wind: Vec<f64>,
    power: Vec<f64>,
    codes: Vec<u8>,
    summary: String,
}

#[wasm_bindgen]
impl CleanView {
    pub fn wind(&self) -> Vec<f64> {
        self.wind.clone()
    }

    pub fn power(&self) -> Vec<f64> {
        self.power.clone()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.codes.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

/// Generate one turbine with injected curtailment and spikes, clean it and
/// score the verdicts against the injected labels.
#[wasm_bindgen]
pub fn clean_turbine(seed: u64, days: usize, curtailment: f64, spikes: f64) -> Result<CleanView, JsError> {
    let cfg = SynthConfig {
        turbines: 1,
        days,
        curtailment_fraction: curtailment,
        spike_fraction: spikes,
        seed,
        ..SynthConfig::default()
    };
    let turbine = generate_plant(&cfg).map_err(js_err)?.remove(0);
    let out = clean_frame(&turbine.frame, &CleanConfig::default(), None).map_err(js_err)?;
    let score = cleaning_score(&out.labels, &turbine.truth).map_err(js_err)?;

    let mut summary = format!(
        "{} points, {} kept, normal rejected {:.2}%\n",
        out.labels.len(),
        out.labels.keep_count(),
        100.0 * score.false_rejection_rate()
    );
    for c in score.classes.iter().chain(std::iter::once(&score.overall)) {
        let name = if c.label == TruthLabel::Normal { "ANY" } else { c.label.name() };
        summary.push_str(&format!(
            "{name:<10} support {:>5}  recall {:.3}  precision {:.3}\n",
            c.support, c.recall, c.precision
        ));
    }
    Ok(CleanView {
        wind: turbine.frame.channels[0].clone(),
        power: turbine.frame.channels[1].clone(),
        codes: out.labels.verdicts.iter().map(|v| reason_code(v.reason())).collect(),
        summary,
    })
}

/// One normalized corpus series cut into patches.
#[wasm_bindgen]
pub struct TokenView {
    values: Vec<f64>,
    patch: usize,
    tokens: usize,
}

#[wasm_bindgen]
impl TokenView {
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }
}

/// Draw a series of `tokens·patch` points from a regime and tokenize it.
#[wasm_bindgen]
pub fn tokenize_series(regime: &str, seed: u64, patch: usize, tokens: usize) -> Result<TokenView, JsError> {
    let regime = Regime::from_name(regime).map_err(js_err)?;
    let mut seq = pretrain_corpus(&[regime], 1, patch * tokens, seed).map_err(js_err)?;
    let t = tokenize(&seq.remove(0).values, patch).map_err(js_err)?;
    Ok(TokenView { patch: t.s, tokens: t.n, values: t.data })
}

/// A small Timer trained one epoch at a time on a synthetic corpus.
#[wasm_bindgen]
pub struct TinyTrainer {
    cfg: TimerConfig,
    params: ParamSet,
    train_set: Dataset,
    val_set: Dataset,
    held_out: Vec<S3Sequence>,
    epochs: usize,
    seed: u64,
}

#[wasm_bindgen]
impl TinyTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(regime: &str, seed: u64) -> Result<TinyTrainer, JsError> {
        let cfg = TimerConfig { model_dim: 16, ffn_hidden: 32, heads: 2, ..TimerConfig::tiny() };
        let rows = cfg.max_tokens();
        let regime = Regime::from_name(regime).map_err(js_err)?;
        let corpus = pretrain_corpus(&[regime], 160, rows * cfg.patch, seed).map_err(js_err)?;
        let (train_seqs, rest) = corpus.split_at(128);
        let train_set = timer_dataset(train_seqs, cfg.patch, rows, false, 600).map_err(js_err)?;
        let val_set = timer_dataset(rest, cfg.patch, rows, false, 600).map_err(js_err)?;
        let params = init_params(&ModelConfig::Timer(cfg.clone()), seed).map_err(js_err)?;
        Ok(TinyTrainer { cfg, params, train_set, val_set, held_out: rest.to_vec(), epochs: 0, seed })
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Validation loss of the current parameters.
    pub fn val_loss(&self) -> Result<f64, JsError> {
        evaluate_loss(&ModelConfig::Timer(self.cfg.clone()), &self.params, &self.val_set, 32).map_err(js_err)
    }

    /// Train `n` more epochs and return the validation loss after them.
    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        let tc = TrainConfig {
            lr: 3e-3,
            schedule: Schedule::Constant,
            epochs: n,
            batch_size: 16,
            patience: n.max(1),
            seed: self.seed.wrapping_add(self.epochs as u64),
            ..TrainConfig::for_mode(TrainMode::Scratch)
        };
        let model = ModelConfig::Timer(self.cfg.clone());
        let out = train(&model, Some(&self.params), &self.train_set, &self.val_set, &tc).map_err(js_err)?;
        self.params = out.params;
        self.epochs += n;
        self.val_loss()
    }

    pub fn patch(&self) -> usize {
        self.cfg.patch
    }

    /// Length of the context fed to [`TinyTrainer::forecast`].
    pub fn context_len(&self) -> usize {
        self.cfg.context_tokens * self.cfg.patch
    }

    /// Held-out series `index` followed by the model's forecast of its last
    /// token: `[series..., forecast...]`, the forecast being `patch` long.
    pub fn forecast(&self, index: usize) -> Result<Vec<f64>, JsError> {
        let seq = &self.held_out[index % self.held_out.len()];
        let ctx = seq.values[..self.context_len()].to_vec();
        let pred = forecast(&self.params, &self.cfg, &ForecastRequest::new(ctx, self.cfg.patch)).map_err(js_err)?;
        let mut out = seq.values.clone();
        out.extend(pred.predictions);
        Ok(out)
    }
}
