use std::ops::Range;

use super::frame::{Channel, RawScadaFrame};
use super::labels::OutlierLabeling;
use crate::error::{Error, Result};

/// Default sample length in time steps.
pub const DEFAULT_WINDOW: usize = 768;
/// Default stride for training and validation windows.
pub const DEFAULT_STRIDE: usize = 100;

/// A `4×window` block of raw values cut from one turbine's cleaned series.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub turbine_id: String,
    pub start: i64,
    pub interval: i64,
    /// Channel-major: channel `c` occupies `data[c * len .. (c + 1) * len]`.
    pub data: Vec<f64>,
}

impl WindowSample {
    pub fn new(turbine_id: impl Into<String>, start: i64, interval: i64, data: Vec<f64>) -> Result<Self> {
        if data.is_empty() || data.len() % 4 != 0 {
            return Err(Error::invalid(format!("window data of {} values is not 4×T", data.len())));
        }
        Ok(Self {
            turbine_id: turbine_id.into(),
            start,
            interval,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        self.channel_at(c.index())
    }

    pub fn channel_at(&self, c: usize) -> &[f64] {
        let t = self.len();
        &self.data[c * t..(c + 1) * t]
    }

    pub fn end(&self) -> i64 {
        self.start + (self.len() as i64 - 1) * self.interval
    }
}

fn usable(frame: &RawScadaFrame, labels: &OutlierLabeling, i: usize) -> bool {
    labels.is_keep(i) && frame.channels.iter().all(|c| !c[i].is_nan())
}

/// Maximal runs of kept rows spaced exactly one sampling interval apart.
pub fn keep_segments(frame: &RawScadaFrame, labels: &OutlierLabeling) -> Vec<Range<usize>> {
    let n = frame.len().min(labels.len());
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if !usable(frame, labels, i) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && usable(frame, labels, i + 1) && frame.consecutive(i) {
            i += 1;
        }
        i += 1;
        out.push(start..i);
    }
    out
}

/// Slide a `window`-long frame with step `stride` over every kept segment.
pub fn segment_and_window(
    frame: &RawScadaFrame,
    labels: &OutlierLabeling,
    window: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid(format!("window ({window}) and stride ({stride}) must be >= 1")));
    }
    if labels.len() != frame.len() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), frame.len())));
    }
    let mut out = Vec::new();
    for seg in keep_segments(frame, labels) {
        let mut off = 0;
        while off + window <= seg.len() {
            let s = seg.start + off;
            let mut data = Vec::with_capacity(4 * window);
            for ch in &frame.channels {
                data.extend_from_slice(&ch[s..s + window]);
            }
            out.push(WindowSample {
                turbine_id: frame.turbine_id.clone(),
                start: frame.timestamps[s],
                interval: frame.interval,
                data,
            });
            off += stride;
        }
    }
    Ok(out)
}
