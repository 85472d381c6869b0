//! Synthetic wind-plant SCADA data with ground-truth anomaly labels.
//!
//! All turbines of a plant share one mesoscale wind series (AR(1) plus a
//! diurnal cycle) and the ambient temperature; each turbine adds its own
//! local turbulence and sensor noise. Channels are derived from the idealized
//! power curve of the turbine spec, then curtailment runs, single-point
//! spikes and missing-data gaps are injected on disjoint timestamps.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::clean::{Channel, OutlierLabeling, RawScadaFrame, Reason, TurbineSpec, SAMPLING_INTERVAL_SECS};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::util::rng_for;

const DAY: f64 = 86_400.0;
const YEAR: f64 = 365.0 * DAY;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum TruthLabel {
    Normal,
    Curtailed,
    Spike,
    Gap,
}

impl TruthLabel {
    pub const ANOMALIES: [TruthLabel; 3] = [TruthLabel::Curtailed, TruthLabel::Spike, TruthLabel::Gap];

    pub fn name(self) -> &'static str {
        match self {
            TruthLabel::Normal => "NORMAL",
            TruthLabel::Curtailed => "CURTAILED",
            TruthLabel::Spike => "SPIKE",
            TruthLabel::Gap => "GAP",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::Normal, Self::Curtailed, Self::Spike, Self::Gap]
            .into_iter()
            .find(|l| l.name() == s)
    }
}

impl fmt::Display for TruthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub turbine_id: String,
    pub labels: Vec<TruthLabel>,
}

impl GroundTruth {
    pub fn count(&self, l: TruthLabel) -> usize {
        self.labels.iter().filter(|&&x| x == l).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub turbines: usize,
    pub spec: TurbineSpec,
    pub rated_generator_rpm: f64,
    pub days: usize,
    /// Epoch seconds of the first sample.
    pub start: i64,
    /// AR(1) coefficient of the plant wind per 10-minute step.
    pub wind_ar: f64,
    pub wind_mean: f64,
    /// Innovation standard deviation of the plant wind (m/s).
    pub wind_volatility: f64,
    pub diurnal_amplitude: f64,
    /// AR(1) coefficient and stationary std of per-turbine turbulence.
    pub local_ar: f64,
    pub local_std: f64,
    pub temperature_mean: f64,
    pub seasonal_amplitude: f64,
    pub temperature_diurnal_amplitude: f64,
    /// Sensor noise std per channel, indexed by [`Channel::index`].
    pub noise: [f64; 4],
    pub pitch_noise: f64,
    pub curtailment_fraction: f64,
    pub spike_fraction: f64,
    pub gap_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let spec = TurbineSpec::onshore_1_5mw();
        let rated = spec.rated_power;
        Self {
            turbines: 6,
            spec,
            rated_generator_rpm: 1800.0,
            days: 70,
            start: 1_672_531_200,
            wind_ar: 0.97,
            wind_mean: 7.0,
            wind_volatility: 0.6,
            diurnal_amplitude: 1.0,
            local_ar: 0.9,
            local_std: 0.4,
            temperature_mean: 10.0,
            seasonal_amplitude: 10.0,
            temperature_diurnal_amplitude: 4.0,
            noise: [0.05, 0.005 * rated, 5.0, 0.3],
            pitch_noise: 0.1,
            curtailment_fraction: 0.0,
            spike_fraction: 0.0,
            gap_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn points_per_turbine(&self) -> usize {
        self.days * (DAY as usize) / SAMPLING_INTERVAL_SECS as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !frac_ok(self.curtailment_fraction) || !frac_ok(self.spike_fraction) || !frac_ok(self.gap_fraction) {
            return Err(Error::Config("injection fractions must be in [0, 1)".into()));
        }
        if self.curtailment_fraction + self.spike_fraction + self.gap_fraction >= 0.5 {
            return Err(Error::Config("injection fractions must sum to < 0.5".into()));
        }
        if self.days == 0 || self.turbines == 0 {
            return Err(Error::Config("synth.days and synth.turbines must be >= 1".into()));
        }
        if !(self.wind_ar.abs() < 1.0 && self.local_ar.abs() < 1.0) {
            return Err(Error::Config("AR coefficients must be in (-1, 1)".into()));
        }
        if self.noise.iter().chain([&self.pitch_noise, &self.wind_volatility, &self.local_std]).any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise levels must be >= 0".into()));
        }
        Ok(())
    }

    pub fn apply_config(mut self, cfg: &KvConfig) -> Result<Self> {
        self.spec = self.spec.apply_config(cfg)?;
        self.turbines = cfg.usize_or("synth.turbines", self.turbines)?;
        self.rated_generator_rpm = cfg.f64_or("synth.rated_generator_rpm", self.rated_generator_rpm)?;
        self.days = cfg.usize_or("synth.days", self.days)?;
        self.start = cfg.get_parsed("synth.start")?.unwrap_or(self.start);
        self.wind_ar = cfg.f64_or("synth.wind_ar", self.wind_ar)?;
        self.wind_mean = cfg.f64_or("synth.wind_mean", self.wind_mean)?;
        self.wind_volatility = cfg.f64_or("synth.wind_volatility", self.wind_volatility)?;
        self.diurnal_amplitude = cfg.f64_or("synth.diurnal_amplitude", self.diurnal_amplitude)?;
        self.local_ar = cfg.f64_or("synth.local_ar", self.local_ar)?;
        self.local_std = cfg.f64_or("synth.local_std", self.local_std)?;
        self.temperature_mean = cfg.f64_or("synth.temperature_mean", self.temperature_mean)?;
        self.seasonal_amplitude = cfg.f64_or("synth.seasonal_amplitude", self.seasonal_amplitude)?;
        self.temperature_diurnal_amplitude =
            cfg.f64_or("synth.temperature_diurnal_amplitude", self.temperature_diurnal_amplitude)?;
        for c in Channel::ALL {
            self.noise[c.index()] = cfg.f64_or(&format!("synth.noise.{}", c.name()), self.noise[c.index()])?;
        }
        self.pitch_noise = cfg.f64_or("synth.noise.pitch_angle", self.pitch_noise)?;
        self.curtailment_fraction = cfg.f64_or("synth.curtailment_fraction", self.curtailment_fraction)?;
        self.spike_fraction = cfg.f64_or("synth.spike_fraction", self.spike_fraction)?;
        self.gap_fraction = cfg.f64_or("synth.gap_fraction", self.gap_fraction)?;
        self.seed = cfg.u64_or("synth.seed", self.seed)?;
        self.validate()?;
        Ok(self)
    }

    pub fn write_config(&self, cfg: &mut KvConfig) {
        self.spec.write_config(cfg);
        cfg.set("synth.turbines", self.turbines);
        cfg.set("synth.rated_generator_rpm", self.rated_generator_rpm);
        cfg.set("synth.days", self.days);
        cfg.set("synth.start", self.start);
        cfg.set("synth.wind_ar", self.wind_ar);
        cfg.set("synth.wind_mean", self.wind_mean);
        cfg.set("synth.wind_volatility", self.wind_volatility);
        cfg.set("synth.diurnal_amplitude", self.diurnal_amplitude);
        cfg.set("synth.local_ar", self.local_ar);
        cfg.set("synth.local_std", self.local_std);
        cfg.set("synth.temperature_mean", self.temperature_mean);
        cfg.set("synth.seasonal_amplitude", self.seasonal_amplitude);
        cfg.set("synth.temperature_diurnal_amplitude", self.temperature_diurnal_amplitude);
        for c in Channel::ALL {
            cfg.set(&format!("synth.noise.{}", c.name()), self.noise[c.index()]);
        }
        cfg.set("synth.noise.pitch_angle", self.pitch_noise);
        cfg.set("synth.curtailment_fraction", self.curtailment_fraction);
        cfg.set("synth.spike_fraction", self.spike_fraction);
        cfg.set("synth.gap_fraction", self.gap_fraction);
        cfg.set("synth.seed", self.seed);
    }
}

/// Noise-free operating point of a turbine at true wind speed `v`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub power: f64,
    pub generator_speed: f64,
    pub pitch: f64,
}

pub fn operating_point(v: f64, spec: &TurbineSpec, rated_rpm: f64) -> OperatingPoint {
    if v < spec.cut_in_speed {
        OperatingPoint {
            power: 0.0,
            generator_speed: 0.0,
            pitch: 0.0,
        }
    } else if v < spec.rated_speed {
        let k = spec.rated_power / spec.rated_speed.powi(3);
        OperatingPoint {
            power: k * v * v * v,
            generator_speed: rated_rpm * v / spec.rated_speed,
            pitch: 0.0,
        }
    } else if v < spec.cut_out_speed {
        OperatingPoint {
            power: spec.rated_power,
            generator_speed: rated_rpm,
            pitch: 25.0 * (v - spec.rated_speed) / (spec.cut_out_speed - spec.rated_speed),
        }
    } else {
        OperatingPoint {
            power: 0.0,
            generator_speed: 0.0,
            pitch: 90.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthTurbine {
    pub frame: RawScadaFrame,
    pub truth: GroundTruth,
    /// Noise-free channels before injection.
    pub nominal: RawScadaFrame,
}

pub type SynthPlant = Vec<SynthTurbine>;

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64, stationary_std: f64) -> Vec<f64> {
    let innov = Normal::new(0.0, stationary_std * (1.0 - phi * phi).sqrt()).expect("finite std");
    let mut x = Normal::new(0.0, stationary_std).expect("finite std").sample(rng);
    (0..n)
        .map(|_| {
            x = phi * x + innov.sample(rng);
            x
        })
        .collect()
}

fn noise(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    }
}

/// Generate every turbine of a plant.
pub fn generate_plant(cfg: &SynthConfig) -> Result<SynthPlant> {
    cfg.validate()?;
    let n = cfg.points_per_turbine();
    let timestamps: Vec<i64> = (0..n as i64).map(|i| cfg.start + i * SAMPLING_INTERVAL_SECS).collect();
    let mut plant_rng = rng_for(cfg.seed, 0);
    let plant_std = cfg.wind_volatility / (1.0 - cfg.wind_ar * cfg.wind_ar).sqrt();
    let plant_wind = ar1(&mut plant_rng, n, cfg.wind_ar, plant_std);
    let temperature: Vec<f64> = timestamps
        .iter()
        .map(|&t| {
            let t = t as f64;
            cfg.temperature_mean
                + cfg.seasonal_amplitude * (2.0 * PI * (t / YEAR - 0.3)).sin()
                + cfg.temperature_diurnal_amplitude * (2.0 * PI * (t / DAY - 0.375)).sin()
        })
        .collect();
    let diurnal: Vec<f64> = timestamps
        .iter()
        .map(|&t| cfg.diurnal_amplitude * (2.0 * PI * (t as f64 / DAY - 0.25)).sin())
        .collect();

    (0..cfg.turbines)
        .map(|k| {
            let mut rng = rng_for(cfg.seed, 1 + k as u64);
            let local = ar1(&mut rng, n, cfg.local_ar, cfg.local_std);
            let id = format!("T{:02}", k + 1);
            let mut nominal: [Vec<f64>; 4] = Default::default();
            let mut nominal_pitch = Vec::with_capacity(n);
            for i in 0..n {
                let v = (cfg.wind_mean + plant_wind[i] + local[i] + diurnal[i]).max(0.0);
                let op = operating_point(v, &cfg.spec, cfg.rated_generator_rpm);
                nominal[0].push(v);
                nominal[1].push(op.power);
                nominal[2].push(op.generator_speed);
                nominal[3].push(temperature[i]);
                nominal_pitch.push(op.pitch);
            }
            let mut ch = nominal.clone();
            let mut pitch = nominal_pitch.clone();
            for i in 0..n {
                for (c, values) in ch.iter_mut().enumerate() {
                    values[i] += noise(&mut rng, cfg.noise[c]);
                }
                ch[0][i] = ch[0][i].max(0.0);
                ch[2][i] = ch[2][i].max(0.0);
                pitch[i] += noise(&mut rng, cfg.pitch_noise);
            }
            let nominal_frame =
                RawScadaFrame::new(id.clone(), timestamps.clone(), nominal, Some(nominal_pitch))?;
            let mut frame = RawScadaFrame::new(id.clone(), timestamps.clone(), ch, Some(pitch))?;
            let mut inj_rng = rng_for(cfg.seed, 10_000 + k as u64);
            let labels = inject(&mut frame, &nominal_frame, cfg, &mut inj_rng);
            Ok(SynthTurbine {
                frame,
                truth: GroundTruth { turbine_id: id, labels },
                nominal: nominal_frame,
            })
        })
        .collect()
}

fn producing(wind: f64, spec: &TurbineSpec) -> bool {
    wind >= spec.cut_in_speed && wind < spec.cut_out_speed
}

fn inject(frame: &mut RawScadaFrame, nominal: &RawScadaFrame, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TruthLabel> {
    let n = frame.len();
    let mut labels = vec![TruthLabel::Normal; n];
    let max_attempts = 50 * n + 100;

    // Curtailment: contiguous dispatch runs; only producing points are affected.
    let target = (cfg.curtailment_fraction * n as f64).round() as usize;
    let mut done = 0;
    let mut attempts = 0;
    while done < target && attempts < max_attempts {
        attempts += 1;
        let len = rng.random_range(3..=30usize);
        let start = rng.random_range(0..n.saturating_sub(len).max(1));
        let factor = rng.random_range(0.2..=0.6);
        let angle = rng.random_range(10.0..=30.0);
        for i in start..(start + len).min(n) {
            if done == target {
                break;
            }
            if labels[i] != TruthLabel::Normal || !producing(frame.channels[0][i], &cfg.spec) {
                continue;
            }
            frame.channels[1][i] = factor * nominal.channels[1][i] + noise(rng, cfg.noise[1]);
            if let Some(p) = frame.pitch.as_mut() {
                p[i] = angle + noise(rng, cfg.pitch_noise);
            }
            labels[i] = TruthLabel::Curtailed;
            done += 1;
        }
    }

    // Spikes: one channel of one producing point, scaled by 3..10 or negated.
    let target = (cfg.spike_fraction * n as f64).round() as usize;
    let mut done = 0;
    let mut attempts = 0;
    while done < target && attempts < max_attempts {
        attempts += 1;
        let i = rng.random_range(0..n);
        if labels[i] != TruthLabel::Normal || !producing(frame.channels[0][i], &cfg.spec) {
            continue;
        }
        let c = rng.random_range(0..3usize);
        if rng.random_bool(0.5) {
            frame.channels[c][i] *= rng.random_range(3.0..=10.0);
        } else {
            frame.channels[c][i] = -frame.channels[c][i];
        }
        labels[i] = TruthLabel::Spike;
        done += 1;
    }

    // Gaps: runs of 1..6 fully missing rows.
    let target = (cfg.gap_fraction * n as f64).round() as usize;
    let mut done = 0;
    let mut attempts = 0;
    while done < target && attempts < max_attempts {
        attempts += 1;
        let len = rng.random_range(1..=6usize).min(target - done);
        let start = rng.random_range(0..n.saturating_sub(len).max(1));
        if (start..start + len).any(|i| i >= n || labels[i] != TruthLabel::Normal) {
            continue;
        }
        for i in start..start + len {
            for ch in frame.channels.iter_mut() {
                ch[i] = f64::NAN;
            }
            if let Some(p) = frame.pitch.as_mut() {
                p[i] = f64::NAN;
            }
            labels[i] = TruthLabel::Gap;
        }
        done += len;
    }
    labels
}

/// Write `turbine_id,timestamp,label` rows for every turbine.
pub fn write_truth_csv(plant: &[SynthTurbine], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["turbine_id", "timestamp", "label"])?;
    for t in plant {
        for (ts, l) in t.frame.timestamps.iter().zip(&t.truth.labels) {
            w.write_record([t.truth.turbine_id.as_str(), ts.to_string().as_str(), l.name()])?;
        }
    }
    w.flush().map_err(|e| Error::io("truth.csv", e))?;
    Ok(())
}

/// Read `truth.csv` back into per-turbine label vectors, in file order.
pub fn read_truth_csv(reader: impl Read) -> Result<Vec<(GroundTruth, Vec<i64>)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out: Vec<(GroundTruth, Vec<i64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default();
        let ts: i64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid("truth.csv: bad timestamp"))?;
        let label = rec
            .get(2)
            .and_then(TruthLabel::from_name)
            .ok_or_else(|| Error::invalid(format!("truth.csv: bad label {:?}", rec.get(2))))?;
        match out.last_mut() {
            Some((g, t)) if g.turbine_id == id => {
                g.labels.push(label);
                t.push(ts);
            }
            _ => out.push((
                GroundTruth {
                    turbine_id: id.to_string(),
                    labels: vec![label],
                },
                vec![ts],
            )),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore {
    pub label: TruthLabel,
    pub support: usize,
    /// Points of this class rejected for any reason.
    pub detected: usize,
    /// Points whose rejection reason attributes them to this class.
    pub flagged: usize,
    /// Flagged points whose true label is this class.
    pub flagged_correct: usize,
    pub precision: f64,
    pub recall: f64,
    /// Set when precision had no denominator and is reported as 1.
    pub precision_undefined: bool,
}

impl ClassScore {
    fn new(label: TruthLabel, support: usize, detected: usize, flagged: usize, flagged_correct: usize) -> Self {
        Self {
            label,
            support,
            detected,
            flagged,
            flagged_correct,
            precision: if flagged == 0 { 1.0 } else { flagged_correct as f64 / flagged as f64 },
            recall: if support == 0 { 1.0 } else { detected as f64 / support as f64 },
            precision_undefined: flagged == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleaningScore {
    pub classes: Vec<ClassScore>,
    /// All anomaly classes pooled against NORMAL: every rejection is a
    /// prediction of "anomalous".
    pub overall: ClassScore,
    pub normal_total: usize,
    pub normal_rejected: usize,
}

impl CleaningScore {
    pub fn class(&self, l: TruthLabel) -> &ClassScore {
        self.classes.iter().find(|c| c.label == l).expect("all anomaly classes scored")
    }

    pub fn false_rejection_rate(&self) -> f64 {
        if self.normal_total == 0 {
            0.0
        } else {
            self.normal_rejected as f64 / self.normal_total as f64
        }
    }

    /// Sum counts over several turbines.
    pub fn combine(scores: &[CleaningScore]) -> CleaningScore {
        let pooled = |pick: &dyn Fn(&CleaningScore) -> &ClassScore, label| {
            let sum = |f: fn(&ClassScore) -> usize| scores.iter().map(|s| f(pick(s))).sum();
            ClassScore::new(
                label,
                sum(|c| c.support),
                sum(|c| c.detected),
                sum(|c| c.flagged),
                sum(|c| c.flagged_correct),
            )
        };
        CleaningScore {
            classes: TruthLabel::ANOMALIES
                .iter()
                .map(|&l| pooled(&|s: &CleaningScore| s.class(l), l))
                .collect(),
            overall: pooled(&|s: &CleaningScore| &s.overall, TruthLabel::Normal),
            normal_total: scores.iter().map(|s| s.normal_total).sum(),
            normal_rejected: scores.iter().map(|s| s.normal_rejected).sum(),
        }
    }
}

/// The anomaly class a rejection reason points at.
pub fn attributed_class(reason: Reason) -> TruthLabel {
    match reason {
        Reason::PitchLimit | Reason::PowerFloor => TruthLabel::Curtailed,
        Reason::Range | Reason::DbscanNoise | Reason::Lof => TruthLabel::Spike,
        Reason::Missing => TruthLabel::Gap,
    }
}

/// Per-class precision and recall of the cleaning verdicts.
///
/// Recall counts a class point as found when it is rejected for any reason.
/// Precision is multi-class: among points whose rejection reason is
/// attributed to a class (see [`attributed_class`]), the share that truly
/// belong to it. The pooled `overall` score treats every rejection as a
/// positive.
pub fn cleaning_score(predicted: &OutlierLabeling, truth: &GroundTruth) -> Result<CleaningScore> {
    if predicted.len() != truth.labels.len() {
        return Err(Error::invalid(format!(
            "cleaning_score: {} verdicts for {} truth labels",
            predicted.len(),
            truth.labels.len()
        )));
    }
    let pairs = || truth.labels.iter().copied().zip(predicted.verdicts.iter().map(|v| v.reason()));
    let normal_total = truth.count(TruthLabel::Normal);
    let normal_rejected = pairs().filter(|(t, r)| *t == TruthLabel::Normal && r.is_some()).count();
    let classes: Vec<ClassScore> = TruthLabel::ANOMALIES
        .iter()
        .map(|&l| {
            let detected = pairs().filter(|(t, r)| *t == l && r.is_some()).count();
            let flagged: Vec<TruthLabel> = pairs()
                .filter(|(_, r)| r.map(attributed_class) == Some(l))
                .map(|(t, _)| t)
                .collect();
            let correct = flagged.iter().filter(|&&t| t == l).count();
            ClassScore::new(l, truth.count(l), detected, flagged.len(), correct)
        })
        .collect();
    let support: usize = classes.iter().map(|c| c.support).sum();
    let detected: usize = classes.iter().map(|c| c.detected).sum();
    Ok(CleaningScore {
        classes,
        overall: ClassScore::new(TruthLabel::Normal, support, detected, detected + normal_rejected, detected),
        normal_total,
        normal_rejected,
    })
}
