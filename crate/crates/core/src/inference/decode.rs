use crate::autodiff::{Graph, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::models::{forward, ModelConfig, TimerConfig};
use crate::train::time_slot;

/// Timestamp of the first context point and the sampling interval, used to
/// place tokens on the time-embedding grid.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TimeAnchor {
    pub start: i64,
    pub interval: i64,
}

impl TimeAnchor {
    fn slot_of_token(&self, k: usize, patch: usize) -> usize {
        time_slot(self.start + (k * patch) as i64 * self.interval)
    }
}

/// Rolling next-token generation for a batch of token histories of equal
/// length. Each history is row-major `tokens×width`. Returns the generated
/// tokens of every series, `iterations×width` values each.
pub(crate) fn rolling_decode(
    params: &ParamSet,
    model: &ModelConfig,
    decoder: &TimerConfig,
    width: usize,
    histories: &[Vec<f64>],
    anchors: Option<&[TimeAnchor]>,
    iterations: usize,
) -> Result<Vec<Vec<f64>>> {
    let b = histories.len();
    if b == 0 {
        return Ok(Vec::new());
    }
    let n0 = histories[0].len() / width;
    if n0 == 0 || histories.iter().any(|h| h.len() != n0 * width) {
        return Err(Error::invalid(format!(
            "contexts must all hold the same whole number of {width}-wide tokens"
        )));
    }
    if decoder.use_time_embedding && anchors.is_none_or(|a| a.len() != b) {
        return Err(Error::invalid("the model uses a time embedding: a time anchor per series is required"));
    }
    let keep = decoder.context_tokens;
    let mut seqs: Vec<Vec<f64>> = histories.to_vec();
    for it in 0..iterations {
        let total = n0 + it;
        let n = total.min(keep);
        let first = total - n;
        let mut flat = Vec::with_capacity(b * n * width);
        for s in &seqs {
            flat.extend_from_slice(&s[first * width..total * width]);
        }
        let slots: Option<Vec<usize>> = if decoder.use_time_embedding {
            anchors.map(|a| {
                a.iter()
                    .flat_map(|anchor| (first..total).map(move |k| anchor.slot_of_token(k, decoder.patch)))
                    .collect()
            })
        } else {
            None
        };
        let mut g = Graph::eval();
        let bound = params.register(&mut g, false);
        let x = g.constant(Tensor::new(vec![b, n, width], flat)?);
        let y = forward(&mut g, &bound, model, x, slots.as_deref())?;
        let out = g.value(y).data();
        for (j, s) in seqs.iter_mut().enumerate() {
            let row = (j * n + n - 1) * width;
            s.extend_from_slice(&out[row..row + width]);
        }
    }
    Ok(seqs.into_iter().map(|s| s[n0 * width..].to_vec()).collect())
}
