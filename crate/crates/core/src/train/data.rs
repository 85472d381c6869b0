use crate::clean::WindowSample;
use crate::error::{Error, Result};
use crate::models::{ModelConfig, TIME_SLOTS};
use crate::series::{to_s3_with_context, S3Sequence};

const SLOT_SECS: i64 = 86_400 / TIME_SLOTS as i64;

/// Equal-shaped training examples, each a `rows×width` row-major matrix.
/// The model is trained to predict row `i + 1` from rows `0..=i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub width: usize,
    pub samples: Vec<Vec<f64>>,
    /// Per-sample time-embedding slot of every row, when used.
    pub time: Option<Vec<Vec<usize>>>,
}

impl Dataset {
    pub fn new(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn push(&mut self, values: Vec<f64>, time: Option<Vec<usize>>) {
        debug_assert_eq!(values.len(), self.rows * self.width);
        self.samples.push(values);
        if let Some(t) = time {
            self.time.get_or_insert_with(Vec::new).push(t);
        }
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: self.rows,
            width: self.width,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            time: self.time.as_ref().map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
        }
    }

    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if self.rows == 0 && self.is_empty() {
            *self = other;
            return Ok(());
        }
        if other.rows != self.rows || other.width != self.width || other.time.is_some() != self.time.is_some() {
            return Err(Error::invalid("cannot merge datasets of different shapes"));
        }
        self.samples.extend(other.samples);
        if let (Some(a), Some(b)) = (self.time.as_mut(), other.time) {
            a.extend(b);
        }
        Ok(())
    }
}

/// Which points of a window its normalization statistics come from.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum NormScope {
    /// The whole window.
    #[default]
    Window,
    /// Only the first `n` points, as at forecast time.
    Prefix(usize),
}

impl NormScope {
    fn s3(self, w: &WindowSample) -> Result<Vec<S3Sequence>> {
        match self {
            NormScope::Window => to_s3_with_context(w, w.len()),
            NormScope::Prefix(n) => to_s3_with_context(w, n.min(w.len())),
        }
    }
}

/// Time-embedding slot (10-minute step of the UTC day) of `ts`.
pub fn time_slot(ts: i64) -> usize {
    (ts.rem_euclid(86_400) / SLOT_SECS) as usize
}

fn token_slots(start: i64, rows: usize, step_secs: i64) -> Vec<usize> {
    (0..rows).map(|i| time_slot(start + i as i64 * step_secs)).collect()
}

/// Univariate series as patch tokens for Timer. Every series must hold
/// `rows·patch` values.
pub fn timer_dataset(seqs: &[S3Sequence], patch: usize, rows: usize, with_time: bool, interval: i64) -> Result<Dataset> {
    let mut d = Dataset::new(rows, patch);
    for q in seqs {
        if q.values.len() != rows * patch {
            return Err(Error::invalid(format!(
                "series of {} values does not hold {rows} tokens of {patch}",
                q.values.len()
            )));
        }
        let time = with_time.then(|| token_slots(q.start, rows, patch as i64 * interval));
        d.push(q.values.clone(), time);
    }
    Ok(d)
}

/// Window-normalized multichannel tokens: row `i` concatenates patch `i` of
/// every channel.
pub fn transformer_dataset(windows: &[WindowSample], patch: usize, rows: usize, with_time: bool, scope: NormScope) -> Result<Dataset> {
    let mut d = Dataset::new(rows, 4 * patch);
    for w in windows {
        let seqs = scope.s3(w)?;
        d.push(interleave_patches(&seqs, patch, rows)?, with_time.then(|| token_slots(w.start, rows, patch as i64 * w.interval)));
    }
    Ok(d)
}

/// Concatenate patch `i` of every series into token `i`.
pub fn interleave_patches(seqs: &[S3Sequence], patch: usize, rows: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(seqs.len() * patch * rows);
    for i in 0..rows {
        for q in seqs {
            let part = q
                .values
                .get(i * patch..(i + 1) * patch)
                .ok_or_else(|| Error::invalid(format!("series too short for {rows} tokens of {patch}")))?;
            out.extend_from_slice(part);
        }
    }
    Ok(out)
}

/// Window-normalized time steps for the LSTM: row `t` holds the four
/// channels at step `t`.
pub fn lstm_dataset(windows: &[WindowSample], steps: usize, scope: NormScope) -> Result<Dataset> {
    let mut d = Dataset::new(steps, 4);
    for w in windows {
        let seqs = scope.s3(w)?;
        if seqs[0].values.len() < steps {
            return Err(Error::invalid(format!("window of {} steps, need {steps}", seqs[0].values.len())));
        }
        d.push((0..steps).flat_map(|t| seqs.iter().map(move |q| q.values[t])).collect(), None);
    }
    Ok(d)
}

/// Build the dataset `cfg` trains on from cleaned windows, each holding
/// exactly `rows` tokens (time steps for the LSTM).
pub fn dataset_for(cfg: &ModelConfig, windows: &[WindowSample], rows: usize, scope: NormScope) -> Result<Dataset> {
    match cfg {
        ModelConfig::Timer(c) => {
            let seqs: Vec<S3Sequence> = windows
                .iter()
                .map(|w| scope.s3(w))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            let interval = windows.first().map_or(600, |w| w.interval);
            timer_dataset(&seqs, c.patch, rows, c.use_time_embedding, interval)
        }
        ModelConfig::Transformer(c) => transformer_dataset(windows, c.decoder.patch, rows, c.decoder.use_time_embedding, scope),
        ModelConfig::Lstm(_) => lstm_dataset(windows, rows, scope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::to_s3;

    fn window() -> WindowSample {
        let data: Vec<f64> = (0..4 * 8).map(|i| (i % 8) as f64 + (i / 8) as f64 * 0.5).collect();
        WindowSample::new("T", 0, 600, data).unwrap()
    }

    #[test]
    fn layouts() {
        let w = window();
        let t = transformer_dataset(std::slice::from_ref(&w), 4, 2, false, NormScope::Window).unwrap();
        assert_eq!((t.rows, t.width), (2, 16));
        let seqs = to_s3(&w).unwrap();
        assert_eq!(t.samples[0][..4], seqs[0].values[..4]);
        assert_eq!(t.samples[0][4..8], seqs[1].values[..4]);
        assert_eq!(t.samples[0][16..20], seqs[0].values[4..8]);

        let l = lstm_dataset(std::slice::from_ref(&w), 8, NormScope::Window).unwrap();
        assert_eq!(l.samples[0][4..8], [seqs[0].values[1], seqs[1].values[1], seqs[2].values[1], seqs[3].values[1]]);
    }

    #[test]
    fn slots_wrap_at_midnight() {
        assert_eq!(time_slot(0), 0);
        assert_eq!(time_slot(86_400 - 1), TIME_SLOTS - 1);
        assert_eq!(time_slot(-600), TIME_SLOTS - 1);
    }
}
