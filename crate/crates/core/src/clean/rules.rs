use super::frame::{Channel, RawScadaFrame};
use super::labels::{OutlierLabeling, Reason};
use super::spec::TurbineSpec;
use crate::error::{Error, Result};

/// Per-channel `(min, max)` bounds.
pub type Bounds = [(f64, f64); 4];

fn row(frame: &RawScadaFrame, i: usize) -> [f64; 4] {
    [
        frame.channels[0][i],
        frame.channels[1][i],
        frame.channels[2][i],
        frame.channels[3][i],
    ]
}

/// Range verdict for one row: `MISSING` if any channel is NaN, `RANGE` if any
/// value falls outside the spec ranges or the optional trimming bounds.
pub(crate) fn range_verdict(values: &[f64; 4], spec: &TurbineSpec, trim: Option<&Bounds>) -> Option<Reason> {
    if values.iter().any(|v| v.is_nan()) {
        return Some(Reason::Missing);
    }
    for c in Channel::ALL {
        let v = values[c.index()];
        let (lo, hi) = spec.range(c);
        if v < lo || v > hi {
            return Some(Reason::Range);
        }
        if let Some(b) = trim {
            let (lo, hi) = b[c.index()];
            if v < lo || v > hi {
                return Some(Reason::Range);
            }
        }
    }
    None
}

/// Turbine-physics verdict for one in-range row.
pub(crate) fn power_curve_verdict(wind: f64, power: f64, pitch: Option<f64>, spec: &TurbineSpec) -> Option<Reason> {
    if wind >= spec.cut_in_speed && wind < spec.rated_speed {
        if let Some(p) = pitch {
            if p > spec.mppt_pitch_limit {
                return Some(Reason::PitchLimit);
            }
        }
    } else if wind >= spec.rated_speed
        && wind < spec.cut_out_speed
        && power < spec.power_floor_fraction * spec.rated_power
    {
        return Some(Reason::PowerFloor);
    }
    None
}

/// `REJECT(MISSING)` for rows with a NaN channel, `REJECT(RANGE)` for rows with
/// a value outside its plausible range, `KEEP` otherwise.
pub fn range_filter(frame: &RawScadaFrame, spec: &TurbineSpec) -> OutlierLabeling {
    range_filter_with(frame, spec, None)
}

/// [`range_filter`] with additional trimming bounds (see [`quantile_bounds`]).
pub fn range_filter_with(frame: &RawScadaFrame, spec: &TurbineSpec, trim: Option<&Bounds>) -> OutlierLabeling {
    let mut out = OutlierLabeling::all_keep(frame.len());
    for i in 0..frame.len() {
        if let Some(r) = range_verdict(&row(frame, i), spec, trim) {
            out.reject_if_kept(i, r);
        }
    }
    out
}

/// Empirical `[q, 1 − q]` quantiles of each channel over the rows that pass
/// the hard ranges. Channels with no such rows get unbounded limits.
pub fn quantile_bounds(frame: &RawScadaFrame, spec: &TurbineSpec, q: f64) -> Bounds {
    let ok: Vec<usize> = (0..frame.len())
        .filter(|&i| range_verdict(&row(frame, i), spec, None).is_none())
        .collect();
    let mut bounds = [(f64::NEG_INFINITY, f64::INFINITY); 4];
    if ok.is_empty() {
        return bounds;
    }
    for c in Channel::ALL {
        let mut v: Vec<f64> = ok.iter().map(|&i| frame.channel(c)[i]).collect();
        v.sort_by(f64::total_cmp);
        let k = (q * (v.len() - 1) as f64).floor() as usize;
        bounds[c.index()] = (v[k], v[v.len() - 1 - k]);
    }
    bounds
}

/// Apply the pitch and power-floor rules to the rows `prior` keeps.
///
/// Without pitch data the pitch rule is skipped and a warning is recorded.
/// Rows whose pitch is NaN are exempt from the pitch rule.
pub fn power_curve_filter(
    frame: &RawScadaFrame,
    pitch: Option<&[f64]>,
    spec: &TurbineSpec,
    prior: &OutlierLabeling,
) -> Result<OutlierLabeling> {
    if prior.len() != frame.len() {
        return Err(Error::invalid(format!(
            "power_curve_filter: {} labels for {} rows",
            prior.len(),
            frame.len()
        )));
    }
    if let Some(p) = pitch {
        if p.len() != frame.len() {
            return Err(Error::invalid(format!(
                "power_curve_filter: pitch has {} values for {} rows",
                p.len(),
                frame.len()
            )));
        }
    }
    let mut out = prior.clone();
    if pitch.is_none() {
        out.warnings.push(format!(
            "{}: no pitch data; pitch-limit rule skipped",
            frame.turbine_id
        ));
    }
    let wind = frame.channel(Channel::WindSpeed);
    let power = frame.channel(Channel::Power);
    for i in 0..frame.len() {
        if !out.is_keep(i) {
            continue;
        }
        let p = pitch.map(|p| p[i]).filter(|v| !v.is_nan());
        if let Some(r) = power_curve_verdict(wind[i], power[i], p, spec) {
            out.reject_if_kept(i, r);
        }
    }
    Ok(out)
}
