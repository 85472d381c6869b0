use std::ops::Range;

use super::density::{density_pass, density_refine_with, DensityConfig, Standardization};
use super::frame::{Channel, RawScadaFrame};
use super::interpolate::{fill_run, fillable_runs};
use super::labels::{OutlierLabeling, Verdict};
use super::rules::{power_curve_filter, power_curve_verdict, quantile_bounds, range_filter_with, range_verdict, Bounds};
use super::spec::TurbineSpec;
use crate::config::KvConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CleanConfig {
    pub spec: TurbineSpec,
    pub density: DensityConfig,
    /// Longest rejected run that interpolation may repair.
    pub max_gap: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            spec: TurbineSpec::default(),
            density: DensityConfig::default(),
            max_gap: 3,
        }
    }
}

impl CleanConfig {
    pub fn apply_config(self, cfg: &KvConfig) -> Result<Self> {
        let max_gap = cfg.usize_or("clean.max_gap", self.max_gap)?;
        if max_gap == 0 {
            return Err(Error::Config("clean.max_gap must be >= 1".into()));
        }
        Ok(Self {
            spec: self.spec.apply_config(cfg)?,
            density: self.density.apply_config(cfg)?,
            max_gap,
        })
    }

    pub fn write_config(&self, cfg: &mut KvConfig) {
        self.spec.write_config(cfg);
        self.density.write_config(cfg);
        cfg.set("clean.max_gap", self.max_gap);
    }
}

/// Statistics fitted on the first cleaning run. Passing them back in makes a
/// rerun on the cleaned output reproduce the same decisions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CleaningStats {
    pub standardization: Option<Standardization>,
    pub trim: Option<Bounds>,
}

impl CleaningStats {
    pub fn write_config(&self, cfg: &mut KvConfig) {
        if let Some(s) = &self.standardization {
            cfg.set("stats.wind_mean", s.mean[0]);
            cfg.set("stats.power_mean", s.mean[1]);
            cfg.set("stats.wind_std", s.std[0]);
            cfg.set("stats.power_std", s.std[1]);
        }
        if let Some(b) = &self.trim {
            for c in Channel::ALL {
                cfg.set(&format!("stats.trim.{}.min", c.name()), b[c.index()].0);
                cfg.set(&format!("stats.trim.{}.max", c.name()), b[c.index()].1);
            }
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let standardization = match (
            cfg.get_f64("stats.wind_mean")?,
            cfg.get_f64("stats.power_mean")?,
            cfg.get_f64("stats.wind_std")?,
            cfg.get_f64("stats.power_std")?,
        ) {
            (Some(wm), Some(pm), Some(ws), Some(ps)) => Some(Standardization {
                mean: [wm, pm],
                std: [ws, ps],
            }),
            (None, None, None, None) => None,
            _ => return Err(Error::Config("incomplete stats.* standardization block".into())),
        };
        let mut trim = [(0.0, 0.0); 4];
        let mut found = 0;
        for c in Channel::ALL {
            let lo = cfg.get_f64(&format!("stats.trim.{}.min", c.name()))?;
            let hi = cfg.get_f64(&format!("stats.trim.{}.max", c.name()))?;
            if let (Some(lo), Some(hi)) = (lo, hi) {
                trim[c.index()] = (lo, hi);
                found += 1;
            }
        }
        let trim = match found {
            0 => None,
            4 => Some(trim),
            _ => return Err(Error::Config("incomplete stats.trim.* block".into())),
        };
        Ok(Self { standardization, trim })
    }
}

#[derive(Clone, Debug)]
pub struct CleanOutput {
    /// All input rows, with repaired values on interpolated runs.
    pub frame: RawScadaFrame,
    /// Final verdicts after interpolation.
    pub labels: OutlierLabeling,
    /// Verdicts after the detection stages, before interpolation.
    pub detection: OutlierLabeling,
    pub stats: CleaningStats,
}

impl CleanOutput {
    /// Kept rows only.
    pub fn cleaned(&self) -> RawScadaFrame {
        self.frame.select(|i| self.labels.is_keep(i))
    }
}

/// Range and quantile trimming, turbine-physics rules, density refinement and
/// short-gap interpolation.
///
/// Interpolated runs are kept only if the repaired values pass the rule
/// stages and the repaired kept set is stable under one more density pass.
/// Together with reusing `stats`, this makes cleaning the kept rows of the
/// output a no-op.
pub fn clean_frame(frame: &RawScadaFrame, cfg: &CleanConfig, stats: Option<&CleaningStats>) -> Result<CleanOutput> {
    frame.validate()?;
    cfg.spec.validate()?;
    let trim = match stats {
        Some(s) => s.trim,
        None => cfg.spec.trim_quantile.map(|q| quantile_bounds(frame, &cfg.spec, q)),
    };
    let ranged = range_filter_with(frame, &cfg.spec, trim.as_ref());
    let ruled = power_curve_filter(frame, frame.pitch.as_deref(), &cfg.spec, &ranged)?;
    let standardization = match stats {
        Some(s) => s.standardization,
        None => Standardization::fit(frame, &ruled),
    };
    let detection = match &standardization {
        Some(st) => density_refine_with(frame, &ruled, &cfg.density, st)?,
        None => ruled,
    };

    let mut runs = fillable_runs(frame, &detection, cfg.max_gap);
    let mut repaired = frame.clone();
    for r in &runs {
        fill_run(&mut repaired, r);
    }
    runs.retain(|r| {
        r.clone().all(|i| {
            let v = [
                repaired.channels[0][i],
                repaired.channels[1][i],
                repaired.channels[2][i],
                repaired.channels[3][i],
            ];
            let pitch = repaired.pitch.as_ref().map(|p| p[i]).filter(|p| !p.is_nan());
            range_verdict(&v, &cfg.spec, trim.as_ref()).is_none()
                && power_curve_verdict(v[0], v[1], pitch, &cfg.spec).is_none()
        })
    });
    let mut labels = detection.clone();
    if let Some(st) = &standardization {
        runs = settle_density(&repaired, &mut labels, runs, &cfg.density, st)?;
    }

    let mut out_frame = frame.clone();
    for r in &runs {
        fill_run(&mut out_frame, r);
        for i in r.clone() {
            labels.verdicts[i] = Verdict::Keep;
        }
    }
    Ok(CleanOutput {
        frame: out_frame,
        labels,
        detection,
        stats: CleaningStats { standardization, trim },
    })
}

/// Re-run density passes over the kept rows plus the repaired runs until a
/// pass rejects nothing. A rejected repaired point withdraws its whole run; a
/// rejected original point is rejected in `labels`. Each pass removes at
/// least one point, so this terminates, and the final kept set is stable.
fn settle_density(
    repaired: &RawScadaFrame,
    labels: &mut OutlierLabeling,
    mut runs: Vec<Range<usize>>,
    cfg: &DensityConfig,
    st: &Standardization,
) -> Result<Vec<Range<usize>>> {
    let wind = repaired.channel(Channel::WindSpeed);
    let power = repaired.channel(Channel::Power);
    if runs.is_empty() {
        return Ok(runs);
    }
    loop {
        let mut run_of = vec![usize::MAX; repaired.len()];
        for (k, r) in runs.iter().enumerate() {
            run_of[r.clone()].iter_mut().for_each(|f| *f = k);
        }
        let kept: Vec<usize> = (0..repaired.len())
            .filter(|&i| labels.is_keep(i) || run_of[i] != usize::MAX)
            .collect();
        if kept.len() < cfg.min_points_for_density {
            return Ok(runs);
        }
        let pts: Vec<f64> = kept.iter().flat_map(|&i| st.apply(wind[i], power[i])).collect();
        let verdicts = density_pass(&pts, cfg, &mut Vec::new())?;
        let mut dropped = vec![false; runs.len()];
        let mut changed = false;
        for (&i, v) in kept.iter().zip(&verdicts) {
            if let Some(reason) = v {
                changed = true;
                match run_of[i] {
                    usize::MAX => labels.reject_if_kept(i, *reason),
                    k => dropped[k] = true,
                }
            }
        }
        if !changed {
            return Ok(runs);
        }
        let mut k = 0;
        runs.retain(|_| {
            k += 1;
            !dropped[k - 1]
        });
    }
}
