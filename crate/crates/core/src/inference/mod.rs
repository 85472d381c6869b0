//! Iterative multi-horizon forecasting with trained models.
//!
//! Decoders generate one token per iteration from a rolling window of the
//! most recent `context_tokens` tokens; the LSTM is rolled forward one step at
//! a time on its own predictions.

mod decode;
mod io;
mod lstm;

pub use decode::TimeAnchor;
pub use io::{read_predictions, write_predictions, PredictionRow};

use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::models::{BaselineTransformerConfig, LstmConfig, ModelConfig, TimerConfig};
use crate::series::{denormalize, NormStats};
use crate::util::par_map;
use decode::rolling_decode;
use lstm::LstmStepper;

/// Series per forward pass when forecasting many windows.
const BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastRequest {
    /// Normalized context; its length must be a multiple of the patch size.
    pub context: Vec<f64>,
    pub horizon: usize,
    pub time: Option<TimeAnchor>,
    /// Normalization of the context, for a raw-unit copy of the output.
    pub stats: Option<NormStats>,
}

impl ForecastRequest {
    pub fn new(context: Vec<f64>, horizon: usize) -> Self {
        Self { context, horizon, time: None, stats: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastResult {
    /// `horizon` values in normalized space.
    pub predictions: Vec<f64>,
    pub iterations: usize,
    pub raw: Option<Vec<f64>>,
}

/// Generation steps needed for `horizon` points with tokens of `patch`.
pub fn iterations_for(horizon: usize, patch: usize) -> usize {
    horizon.div_ceil(patch)
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    Ok(())
}

/// Forecast one normalized univariate series with Timer.
pub fn forecast(params: &ParamSet, cfg: &TimerConfig, request: &ForecastRequest) -> Result<ForecastResult> {
    let mut out = forecast_batch(params, cfg, std::slice::from_ref(request))?;
    Ok(out.remove(0))
}

/// [`forecast`] for many series at once. Requests may have different
/// horizons but must share a context length.
pub fn forecast_batch(params: &ParamSet, cfg: &TimerConfig, requests: &[ForecastRequest]) -> Result<Vec<ForecastResult>> {
    let Some(first) = requests.first() else {
        return Ok(Vec::new());
    };
    let s = cfg.patch;
    for r in requests {
        check_horizon(r.horizon)?;
        if r.context.is_empty() || r.context.len() % s != 0 {
            return Err(Error::invalid(format!(
                "context of {} points is not a whole number of {s}-point tokens",
                r.context.len()
            )));
        }
        if r.context.len() != first.context.len() {
            return Err(Error::invalid("batched forecasts need equal context lengths"));
        }
    }
    let iterations = requests.iter().map(|r| iterations_for(r.horizon, s)).max().unwrap_or(0);
    let histories: Vec<Vec<f64>> = requests.iter().map(|r| r.context.clone()).collect();
    let anchors: Option<Vec<TimeAnchor>> = requests.iter().map(|r| r.time).collect();
    let model = ModelConfig::Timer(cfg.clone());
    let generated = rolling_decode(params, &model, cfg, s, &histories, anchors.as_deref(), iterations)?;
    Ok(requests
        .iter()
        .zip(generated)
        .map(|(r, mut g)| {
            g.truncate(r.horizon);
            ForecastResult {
                raw: r.stats.map(|st| denormalize(&g, st)),
                predictions: g,
                iterations: iterations_for(r.horizon, s),
            }
        })
        .collect())
}

/// Multichannel context in raw units, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowContext {
    pub channels: Vec<Vec<f64>>,
    pub time: Option<TimeAnchor>,
}

impl WindowContext {
    pub fn new(channels: Vec<Vec<f64>>) -> Self {
        Self { channels, time: None }
    }

    fn normalized(&self) -> Result<(Vec<Vec<f64>>, Vec<NormStats>)> {
        let len = self.channels.first().map_or(0, Vec::len);
        if len == 0 || self.channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("context channels must be non-empty and of equal length"));
        }
        let stats = self.channels.iter().map(|c| NormStats::fit(c)).collect::<Result<Vec<_>>>()?;
        let values = self.channels.iter().zip(&stats).map(|(c, st)| st.normalize(c)).collect();
        Ok((values, stats))
    }
}

/// Per-channel forecasts, normalized with context-only statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiForecast {
    pub normalized: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub stats: Vec<NormStats>,
    pub iterations: usize,
}

impl MultiForecast {
    fn new(normalized: Vec<Vec<f64>>, stats: Vec<NormStats>, iterations: usize) -> Self {
        let raw = normalized.iter().zip(&stats).map(|(v, st)| denormalize(v, *st)).collect();
        Self { normalized, raw, stats, iterations }
    }
}

/// Channel-independent Timer forecast: every channel is normalized by its
/// own context and forecast as a separate univariate series.
pub fn forecast_multivariate(params: &ParamSet, cfg: &TimerConfig, context: &WindowContext, horizon: usize) -> Result<MultiForecast> {
    let mut out = timer_windows(params, cfg, std::slice::from_ref(context), horizon)?;
    Ok(out.remove(0))
}

fn timer_windows(params: &ParamSet, cfg: &TimerConfig, contexts: &[WindowContext], horizon: usize) -> Result<Vec<MultiForecast>> {
    let mut requests = Vec::new();
    let mut stats = Vec::new();
    for ctx in contexts {
        let (values, st) = ctx.normalized()?;
        for (v, s) in values.into_iter().zip(&st) {
            requests.push(ForecastRequest { context: v, horizon, time: ctx.time, stats: Some(*s) });
        }
        stats.push(st);
    }
    let results = forecast_batch(params, cfg, &requests)?;
    let mut it = results.into_iter();
    Ok(stats
        .into_iter()
        .map(|st| {
            let preds: Vec<ForecastResult> = it.by_ref().take(st.len()).collect();
            let iterations = preds.first().map_or(0, |p| p.iterations);
            MultiForecast::new(preds.into_iter().map(|p| p.predictions).collect(), st, iterations)
        })
        .collect())
}

/// Channel-dependent forecast with the baseline Transformer: each token
/// holds one patch of every channel.
pub fn transformer_forecast(
    params: &ParamSet,
    cfg: &BaselineTransformerConfig,
    context: &WindowContext,
    horizon: usize,
) -> Result<MultiForecast> {
    let mut out = transformer_windows(params, cfg, std::slice::from_ref(context), horizon)?;
    Ok(out.remove(0))
}

fn transformer_windows(
    params: &ParamSet,
    cfg: &BaselineTransformerConfig,
    contexts: &[WindowContext],
    horizon: usize,
) -> Result<Vec<MultiForecast>> {
    check_horizon(horizon)?;
    let (s, c) = (cfg.decoder.patch, cfg.channels);
    let mut histories = Vec::new();
    let mut stats = Vec::new();
    for ctx in contexts {
        let (values, st) = ctx.normalized()?;
        if values.len() != c || values[0].len() % s != 0 {
            return Err(Error::invalid(format!(
                "Transformer context must be {c} channels of whole {s}-point tokens"
            )));
        }
        let n = values[0].len() / s;
        histories.push((0..n).flat_map(|i| values.iter().flat_map(move |v| v[i * s..(i + 1) * s].iter().copied())).collect());
        stats.push(st);
    }
    let anchors: Option<Vec<TimeAnchor>> = contexts.iter().map(|c| c.time).collect();
    let iterations = iterations_for(horizon, s);
    let model = ModelConfig::Transformer(cfg.clone());
    let generated = rolling_decode(params, &model, &cfg.decoder, c * s, &histories, anchors.as_deref(), iterations)?;
    Ok(generated
        .into_iter()
        .zip(stats)
        .map(|(g, st)| {
            let channels = (0..c)
                .map(|ch| {
                    let mut v: Vec<f64> = (0..iterations).flat_map(|i| g[(i * c + ch) * s..(i * c + ch + 1) * s].iter().copied()).collect();
                    v.truncate(horizon);
                    v
                })
                .collect();
            MultiForecast::new(channels, st, iterations)
        })
        .collect())
}

/// Recursive multi-step LSTM forecast: after reading the context, each
/// prediction is fed back as the next input.
pub fn lstm_forecast(params: &ParamSet, cfg: &LstmConfig, context: &WindowContext, horizon: usize) -> Result<MultiForecast> {
    check_horizon(horizon)?;
    let (values, stats) = context.normalized()?;
    if values.len() != cfg.input_dim {
        return Err(Error::invalid(format!("LSTM context must have {} channels", cfg.input_dim)));
    }
    let mut stepper = LstmStepper::new(params, cfg)?;
    let mut next = Vec::new();
    for t in 0..values[0].len() {
        let x: Vec<f64> = values.iter().map(|v| v[t]).collect();
        next = stepper.step(&x);
    }
    let mut out = vec![Vec::with_capacity(horizon); cfg.input_dim];
    for h in 0..horizon {
        for (o, &v) in out.iter_mut().zip(&next) {
            o.push(v);
        }
        if h + 1 < horizon {
            next = stepper.step(&next);
        }
    }
    Ok(MultiForecast::new(out, stats, horizon))
}

/// A trained model ready to forecast.
#[derive(Clone, Debug)]
pub struct Forecaster {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Forecaster {
    pub fn new(config: ModelConfig, params: ParamSet) -> Self {
        Self { config, params }
    }

    /// Forecast every context, batching decoder passes and spreading batches
    /// over `threads`. Results do not depend on the thread count.
    pub fn forecast(&self, contexts: &[WindowContext], horizon: usize, threads: usize) -> Result<Vec<MultiForecast>> {
        check_horizon(horizon)?;
        let chunks: Vec<&[WindowContext]> = contexts.chunks(self.windows_per_batch()).collect();
        let parts = par_map(&chunks, threads, |chunk| -> Result<Vec<MultiForecast>> {
            match &self.config {
                ModelConfig::Timer(c) => timer_windows(&self.params, c, chunk, horizon),
                ModelConfig::Transformer(c) => transformer_windows(&self.params, c, chunk, horizon),
                ModelConfig::Lstm(c) => chunk.iter().map(|ctx| lstm_forecast(&self.params, c, ctx, horizon)).collect(),
            }
        });
        let mut out = Vec::with_capacity(contexts.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    fn windows_per_batch(&self) -> usize {
        match &self.config {
            ModelConfig::Timer(_) => (BATCH / 4).max(1),
            _ => BATCH,
        }
    }
}

#[cfg(test)]
mod tests;
