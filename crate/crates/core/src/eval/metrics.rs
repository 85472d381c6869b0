use crate::clean::{Channel, WindowSample};
use crate::error::{Error, Result};
use crate::inference::{Forecaster, MultiForecast, TimeAnchor, WindowContext};

/// Horizons scored by default, in time steps.
pub const HORIZONS: [usize; 6] = [1, 6, 12, 24, 48, 96];
/// Context points given to every model at evaluation.
pub const EVAL_CONTEXT: usize = 672;

/// Mean of squared differences.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Anything that forecasts every channel of a batch of contexts.
pub trait Predictor: Sync {
    fn predict(&self, contexts: &[WindowContext], horizon: usize, threads: usize) -> Result<Vec<MultiForecast>>;
}

impl Predictor for Forecaster {
    fn predict(&self, contexts: &[WindowContext], horizon: usize, threads: usize) -> Result<Vec<MultiForecast>> {
        self.forecast(contexts, horizon, threads)
    }
}

/// Per-horizon errors of one model over one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonScores {
    pub horizons: Vec<usize>,
    /// Normalized-space MSE per horizon, over windows, channels and steps.
    pub mse: Vec<f64>,
    /// Raw-unit MSE per horizon and channel.
    pub raw_mse: Vec<[f64; 4]>,
    pub n_windows: usize,
    /// Windows too short for the context plus the longest horizon.
    pub skipped: usize,
}

/// Score `model` on `windows`: the first `context` points of each window are
/// the context and the following points the targets, normalized with the
/// context statistics. One forecast of the longest horizon is made per
/// window and sliced for the shorter ones.
pub fn evaluate_horizons(
    model: &dyn Predictor,
    windows: &[WindowSample],
    horizons: &[usize],
    context: usize,
    threads: usize,
) -> Result<HorizonScores> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::invalid("horizons must be a non-empty set of positive lengths"));
    }
    let max_h = *horizons.iter().max().expect("non-empty");
    let usable: Vec<&WindowSample> = windows.iter().filter(|w| w.len() >= context + max_h).collect();
    let skipped = windows.len() - usable.len();
    let contexts: Vec<WindowContext> = usable
        .iter()
        .map(|w| WindowContext {
            channels: Channel::ALL.iter().map(|&c| w.channel(c)[..context].to_vec()).collect(),
            time: Some(TimeAnchor { start: w.start, interval: w.interval }),
        })
        .collect();
    let forecasts = if contexts.is_empty() {
        Vec::new()
    } else {
        model.predict(&contexts, max_h, threads)?
    };
    // Cumulative squared error by step, so each horizon is a prefix sum.
    let mut norm_sq = vec![0.0; max_h];
    let mut raw_sq = vec![[0.0; 4]; max_h];
    for (w, f) in usable.iter().zip(&forecasts) {
        for c in Channel::ALL {
            let k = c.index();
            let truth = &w.channel(c)[context..context + max_h];
            let st = f.stats[k];
            for h in 0..max_h {
                let tn = (truth[h] - st.mean) / st.std;
                norm_sq[h] += (f.normalized[k][h] - tn).powi(2);
                raw_sq[h][k] += (f.raw[k][h] - truth[h]).powi(2);
            }
        }
    }
    let n = usable.len() as f64;
    let mut out = HorizonScores {
        horizons: horizons.to_vec(),
        mse: Vec::new(),
        raw_mse: Vec::new(),
        n_windows: usable.len(),
        skipped,
    };
    for &h in horizons {
        let norm: f64 = norm_sq[..h].iter().sum();
        out.mse.push(norm / (n * 4.0 * h as f64));
        let mut raw = [0.0; 4];
        for (k, r) in raw.iter_mut().enumerate() {
            *r = raw_sq[..h].iter().map(|s| s[k]).sum::<f64>() / (n * h as f64);
        }
        out.raw_mse.push(raw);
    }
    Ok(out)
}
