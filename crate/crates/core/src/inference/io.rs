use std::io::{Read, Write};

use super::MultiForecast;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub channel: String,
    /// 1-based steps ahead of the last context point.
    pub step: usize,
    pub value_normalized: f64,
    pub value_raw: f64,
}

/// Write `channel,step,value_normalized,value_raw` rows, channel by channel.
pub fn write_predictions(forecast: &MultiForecast, channel_names: &[&str], writer: impl Write) -> Result<()> {
    if channel_names.len() != forecast.normalized.len() {
        return Err(Error::invalid(format!(
            "{} channel names for {} forecast channels",
            channel_names.len(),
            forecast.normalized.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["channel", "step", "value_normalized", "value_raw"])?;
    for ((name, norm), raw) in channel_names.iter().zip(&forecast.normalized).zip(&forecast.raw) {
        for (h, (n, r)) in norm.iter().zip(raw).enumerate() {
            w.write_record([name.to_string(), (h + 1).to_string(), n.to_string(), r.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn read_predictions(reader: impl Read) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "step", "value_normalized", "value_raw"] {
        return Err(Error::invalid(format!("unexpected prediction header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let bad = |k: usize| Error::invalid(format!("prediction row {}: bad field `{}`", i + 1, field(k)));
        rows.push(PredictionRow {
            channel: field(0).to_string(),
            step: field(1).parse().map_err(|_| bad(1))?,
            value_normalized: field(2).parse().map_err(|_| bad(2))?,
            value_raw: field(3).parse().map_err(|_| bad(3))?,
        });
    }
    Ok(rows)
}
