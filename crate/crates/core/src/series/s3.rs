use crate::clean::{Channel, WindowSample};
use crate::error::{Error, Result};

/// Lower bound applied to the instance standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    /// Already clamped to at least [`STD_FLOOR`].
    pub std: f64,
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats { mean: 0.0, std: 1.0 };

    /// Population mean and standard deviation of `values`.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot normalize an empty series"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        })
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean) / self.std).collect()
    }
}

pub fn denormalize(values: &[f64], stats: NormStats) -> Vec<f64> {
    values.iter().map(|v| v * stats.std + stats.mean).collect()
}

/// One instance-normalized univariate series.
#[derive(Clone, Debug, PartialEq)]
pub struct S3Sequence {
    pub values: Vec<f64>,
    /// `None` for series that are not SCADA channels (pre-training corpora).
    pub channel: Option<Channel>,
    pub stats: NormStats,
    pub turbine_id: String,
    pub start: i64,
}

impl S3Sequence {
    pub fn raw(&self) -> Vec<f64> {
        denormalize(&self.values, self.stats)
    }
}

/// Split a window into one normalized series per channel, each standardized
/// over the whole window.
pub fn to_s3(sample: &WindowSample) -> Result<Vec<S3Sequence>> {
    to_s3_with_context(sample, sample.len())
}

/// Like [`to_s3`], but statistics come from the first `context` points only,
/// so the values after them are never read when fitting.
pub fn to_s3_with_context(sample: &WindowSample, context: usize) -> Result<Vec<S3Sequence>> {
    if context == 0 || context > sample.len() {
        return Err(Error::invalid(format!(
            "context of {context} points for a window of {}",
            sample.len()
        )));
    }
    Channel::ALL
        .iter()
        .map(|&c| {
            let raw = sample.channel(c);
            let stats = NormStats::fit(&raw[..context])?;
            Ok(S3Sequence {
                values: stats.normalize(raw),
                channel: Some(c),
                stats,
                turbine_id: sample.turbine_id.clone(),
                start: sample.start,
            })
        })
        .collect()
}
