use std::io::{Read, Write};

use super::metrics::HorizonScores;
use crate::clean::Channel;
use crate::error::{Error, Result};

/// Who produced a set of scores and under which protocol settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMeta {
    pub model: String,
    /// `scratch`, `finetune`, `zero-shot`, ...
    pub mode: String,
    pub seed: u64,
    pub data_fraction: f64,
    /// Which turbines the test windows came from.
    pub scope: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub meta: RowMeta,
    pub horizon: usize,
    /// `NaN` when skipped.
    pub mse: f64,
    pub n_windows: usize,
    pub raw_mse: [f64; 4],
    pub skipped: bool,
}

impl ReportRow {
    /// Table row label: the model, with the data fraction when below 1.
    pub fn label(&self) -> String {
        if self.meta.data_fraction < 1.0 {
            format!("{} ({}%)", self.meta.model, fmt_fraction(self.meta.data_fraction))
        } else {
            self.meta.model.clone()
        }
    }
}

fn fmt_fraction(f: f64) -> String {
    let pct = f * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round())
    } else {
        format!("{pct:.1}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

const HEADER: [&str; 13] = [
    "model",
    "mode",
    "horizon",
    "mse",
    "n_windows",
    "seed",
    "data_fraction",
    "scope",
    "status",
    "raw_mse_wind_speed",
    "raw_mse_power",
    "raw_mse_generator_speed",
    "raw_mse_ambient_temperature",
];

impl EvalReport {
    pub fn push_scores(&mut self, meta: &RowMeta, scores: &HorizonScores) {
        for (i, &h) in scores.horizons.iter().enumerate() {
            self.rows.push(ReportRow {
                meta: meta.clone(),
                horizon: h,
                mse: scores.mse[i],
                n_windows: scores.n_windows,
                raw_mse: scores.raw_mse[i],
                skipped: scores.n_windows == 0,
            });
        }
    }

    /// One skipped row per horizon.
    pub fn push_skipped(&mut self, meta: &RowMeta, horizons: &[usize]) {
        for &h in horizons {
            self.rows.push(ReportRow {
                meta: meta.clone(),
                horizon: h,
                mse: f64::NAN,
                n_windows: 0,
                raw_mse: [f64::NAN; 4],
                skipped: true,
            });
        }
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    /// Distinct horizons in ascending order.
    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self.rows.iter().map(|r| r.horizon).collect();
        h.sort_unstable();
        h.dedup();
        h
    }

    /// Distinct row labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            let l = r.label();
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    pub fn find(&self, label: &str, horizon: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.horizon == horizon && r.label() == label)
    }

    pub fn mse_of(&self, model: &str, horizon: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.meta.model == model && r.horizon == horizon && !r.skipped)
            .map(|r| r.mse)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for r in &self.rows {
            let mut rec = vec![
                r.meta.model.clone(),
                r.meta.mode.clone(),
                r.horizon.to_string(),
                r.mse.to_string(),
                r.n_windows.to_string(),
                r.meta.seed.to_string(),
                r.meta.data_fraction.to_string(),
                r.meta.scope.clone(),
                if r.skipped { "skipped" } else { "ok" }.to_string(),
            ];
            rec.extend(r.raw_mse.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        if r.headers()?.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::invalid("unexpected report header"));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let f = |k: usize| rec.get(k).unwrap_or_default();
            let num = |k: usize| -> Result<f64> {
                f(k).parse().map_err(|_| Error::invalid(format!("report row {}: bad number `{}`", i + 1, f(k))))
            };
            let int = |k: usize| -> Result<u64> {
                f(k).parse().map_err(|_| Error::invalid(format!("report row {}: bad integer `{}`", i + 1, f(k))))
            };
            rows.push(ReportRow {
                meta: RowMeta {
                    model: f(0).to_string(),
                    mode: f(1).to_string(),
                    seed: int(5)?,
                    data_fraction: num(6)?,
                    scope: f(7).to_string(),
                },
                horizon: int(2)? as usize,
                mse: num(3)?,
                n_windows: int(4)? as usize,
                skipped: f(8) == "skipped",
                raw_mse: [num(9)?, num(10)?, num(11)?, num(12)?],
            });
        }
        Ok(Self { rows })
    }

    /// Per-channel raw-unit column names, in CSV order.
    pub fn raw_columns() -> [String; 4] {
        Channel::ALL.map(|c| format!("raw_mse_{}", c.name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let meta = RowMeta { model: "Timer".into(), mode: "finetune".into(), seed: 3, data_fraction: 0.25, scope: "plant".into() };
        let mut rep = EvalReport::default();
        rep.push_scores(&meta, &HorizonScores {
            horizons: vec![1, 6],
            mse: vec![0.1, 0.2 + 0.1],
            raw_mse: vec![[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.5]],
            n_windows: 9,
            skipped: 0,
        });
        rep.push_skipped(&RowMeta { model: "LSTM".into(), ..meta }, &[1]);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let back = EvalReport::read_csv(&buf[..]).unwrap();
        assert_eq!(back.rows.len(), 3);
        assert_eq!(back.rows[..2], rep.rows[..2]);
        assert!(back.rows[2].skipped && back.rows[2].mse.is_nan());
        assert_eq!(rep.labels(), ["Timer (25%)", "LSTM (25%)"]);
        assert_eq!(EvalReport::raw_columns()[1], HEADER[10]);
    }
}
