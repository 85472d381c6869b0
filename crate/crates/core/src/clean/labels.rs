use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

/// Why a timestamp was rejected.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    /// Outside the plausible range of a channel.
    Range,
    PitchLimit,
    PowerFloor,
    DbscanNoise,
    Lof,
    /// At least one channel is NaN.
    Missing,
}

impl Reason {
    pub const ALL: [Reason; 6] = [
        Reason::Range,
        Reason::PitchLimit,
        Reason::PowerFloor,
        Reason::DbscanNoise,
        Reason::Lof,
        Reason::Missing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Reason::Range => "RANGE",
            Reason::PitchLimit => "PITCH_LIMIT",
            Reason::PowerFloor => "POWER_FLOOR",
            Reason::DbscanNoise => "DBSCAN_NOISE",
            Reason::Lof => "LOF",
            Reason::Missing => "MISSING",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Keep,
    Reject(Reason),
}

impl Verdict {
    pub fn is_keep(self) -> bool {
        matches!(self, Verdict::Keep)
    }

    pub fn reason(self) -> Option<Reason> {
        match self {
            Verdict::Keep => None,
            Verdict::Reject(r) => Some(r),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Keep => f.write_str("KEEP"),
            Verdict::Reject(r) => write!(f, "REJECT({})", r.name()),
        }
    }
}

/// One verdict per timestamp plus any warnings raised while labeling.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutlierLabeling {
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl OutlierLabeling {
    pub fn all_keep(n: usize) -> Self {
        Self {
            verdicts: vec![Verdict::Keep; n],
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.verdicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verdicts.is_empty()
    }

    pub fn is_keep(&self, i: usize) -> bool {
        self.verdicts[i].is_keep()
    }

    pub fn keep_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_keep()).count()
    }

    pub fn count(&self, reason: Reason) -> usize {
        self.verdicts.iter().filter(|v| v.reason() == Some(reason)).count()
    }

    /// Reject `i` with `reason` if it is currently kept. Never overwrites an
    /// earlier rejection.
    pub(crate) fn reject_if_kept(&mut self, i: usize, reason: Reason) {
        if self.verdicts[i].is_keep() {
            self.verdicts[i] = Verdict::Reject(reason);
        }
    }

    /// `timestamp,verdict,reason` rows.
    pub fn write_csv(&self, timestamps: &[i64], writer: impl Write) -> Result<()> {
        if timestamps.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} timestamps for {} verdicts",
                timestamps.len(),
                self.len()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "verdict", "reason"])?;
        for (t, v) in timestamps.iter().zip(&self.verdicts) {
            let (verdict, reason) = match v {
                Verdict::Keep => ("KEEP", ""),
                Verdict::Reject(r) => ("REJECT", r.name()),
            };
            w.write_record([t.to_string().as_str(), verdict, reason])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl std::io::Read) -> Result<(Vec<i64>, Self)> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut ts = Vec::new();
        let mut verdicts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let t = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::invalid("labels: bad timestamp"))?;
            let v = match (rec.get(1), rec.get(2)) {
                (Some("KEEP"), _) => Verdict::Keep,
                (Some("REJECT"), Some(r)) => Verdict::Reject(
                    Reason::from_name(r).ok_or_else(|| Error::invalid(format!("labels: unknown reason `{r}`")))?,
                ),
                other => return Err(Error::invalid(format!("labels: bad verdict {other:?}"))),
            };
            ts.push(t);
            verdicts.push(v);
        }
        Ok((ts, Self { verdicts, warnings: Vec::new() }))
    }
}
