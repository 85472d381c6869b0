use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// SCADA sampling interval: ten minutes.
pub const SAMPLING_INTERVAL_SECS: i64 = 600;

/// The four telemetry channels used for forecasting.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    WindSpeed,
    Power,
    GeneratorSpeed,
    AmbientTemperature,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::WindSpeed,
        Channel::Power,
        Channel::GeneratorSpeed,
        Channel::AmbientTemperature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::WindSpeed => "wind_speed",
            Channel::Power => "power",
            Channel::GeneratorSpeed => "generator_speed",
            Channel::AmbientTemperature => "ambient_temperature",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Timestamped multivariate telemetry of one turbine. Missing values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct RawScadaFrame {
    pub turbine_id: String,
    pub interval: i64,
    pub timestamps: Vec<i64>,
    /// Indexed by [`Channel::index`].
    pub channels: [Vec<f64>; 4],
    /// Blade pitch angle in degrees, when logged.
    pub pitch: Option<Vec<f64>>,
}

impl RawScadaFrame {
    pub fn new(
        turbine_id: impl Into<String>,
        timestamps: Vec<i64>,
        channels: [Vec<f64>; 4],
        pitch: Option<Vec<f64>>,
    ) -> Result<Self> {
        let frame = Self {
            turbine_id: turbine_id.into(),
            interval: SAMPLING_INTERVAL_SECS,
            timestamps,
            channels,
            pitch,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        for c in Channel::ALL {
            if self.channels[c.index()].len() != n {
                return Err(Error::invalid(format!(
                    "{}: channel {c} has {} values for {n} timestamps",
                    self.turbine_id,
                    self.channels[c.index()].len()
                )));
            }
        }
        if let Some(p) = &self.pitch {
            if p.len() != n {
                return Err(Error::invalid(format!(
                    "{}: pitch has {} values for {n} timestamps",
                    self.turbine_id,
                    p.len()
                )));
            }
        }
        if self.interval <= 0 {
            return Err(Error::invalid("sampling interval must be positive"));
        }
        for w in self.timestamps.windows(2) {
            let d = w[1] - w[0];
            if d <= 0 || d % self.interval != 0 {
                return Err(Error::invalid(format!(
                    "{}: timestamps {} -> {} are not increasing multiples of {} s",
                    self.turbine_id, w[0], w[1], self.interval
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.channels[c.index()]
    }

    /// True when rows `i` and `i + 1` are exactly one interval apart.
    pub fn consecutive(&self, i: usize) -> bool {
        self.timestamps[i + 1] - self.timestamps[i] == self.interval
    }

    /// Rows selected by `keep`, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            turbine_id: self.turbine_id.clone(),
            interval: self.interval,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            channels: [
                pick(&self.channels[0]),
                pick(&self.channels[1]),
                pick(&self.channels[2]),
                pick(&self.channels[3]),
            ],
            pitch: self.pitch.as_ref().map(pick),
        }
    }

    /// Read the per-turbine CSV schema
    /// `timestamp,wind_speed,power,generator_speed,ambient_temperature[,pitch_angle]`.
    pub fn read_csv(turbine_id: &str, reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let ts_col = col("timestamp").ok_or_else(|| Error::invalid("missing `timestamp` column"))?;
        let mut ch_cols = [0usize; 4];
        for c in Channel::ALL {
            ch_cols[c.index()] =
                col(c.name()).ok_or_else(|| Error::invalid(format!("missing `{c}` column")))?;
        }
        let pitch_col = col("pitch_angle");

        let mut timestamps = Vec::new();
        let mut channels: [Vec<f64>; 4] = Default::default();
        let mut pitch = pitch_col.map(|_| Vec::new());
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let ts = field(ts_col).parse::<i64>().map_err(|e| {
                Error::invalid(format!("row {}: bad timestamp `{}`: {e}", line + 2, field(ts_col)))
            })?;
            timestamps.push(ts);
            for c in Channel::ALL {
                channels[c.index()].push(parse_value(field(ch_cols[c.index()]), line + 2)?);
            }
            if let (Some(p), Some(pc)) = (pitch.as_mut(), pitch_col) {
                p.push(parse_value(field(pc), line + 2)?);
            }
        }
        Self::new(turbine_id, timestamps, channels, pitch)
    }

    pub fn read_csv_path(turbine_id: &str, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(turbine_id, std::io::BufReader::new(file))
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp"];
        header.extend(Channel::ALL.iter().map(|c| c.name()));
        if self.pitch.is_some() {
            header.push("pitch_angle");
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.timestamps[i].to_string()];
            row.extend(self.channels.iter().map(|c| format_value(c[i])));
            if let Some(p) = &self.pitch {
                row.push(format_value(p[i]));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn parse_value(s: &str, line: usize) -> Result<f64> {
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|e| Error::invalid(format!("row {line}: bad value `{s}`: {e}")))
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        v.to_string()
    }
}
