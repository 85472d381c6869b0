use super::dbscan::dbscan;
use super::frame::{Channel, RawScadaFrame};
use super::labels::{OutlierLabeling, Reason};
use super::lof::lof;
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::util::{mean, std_dev};

#[derive(Clone, Debug, PartialEq)]
pub struct DensityConfig {
    /// DBSCAN radius in standardized units.
    pub eps: f64,
    pub min_pts: usize,
    /// LOF neighbourhood size.
    pub k: usize,
    pub lof_threshold: f64,
    /// Below this many surviving points the density stage is skipped.
    pub min_points_for_density: usize,
    /// Upper bound on DBSCAN+LOF passes while searching for a fixed point.
    pub max_rounds: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            min_pts: 10,
            k: 20,
            lof_threshold: 1.5,
            min_points_for_density: 100,
            max_rounds: 100,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts == 0 || self.k == 0 || !(self.lof_threshold > 0.0) || self.max_rounds == 0 {
            return Err(Error::Config(format!("invalid density config {self:?}")));
        }
        Ok(())
    }

    pub fn apply_config(mut self, cfg: &KvConfig) -> Result<Self> {
        self.eps = cfg.f64_or("clean.eps", self.eps)?;
        self.min_pts = cfg.usize_or("clean.min_pts", self.min_pts)?;
        self.k = cfg.usize_or("clean.lof_k", self.k)?;
        self.lof_threshold = cfg.f64_or("clean.lof_threshold", self.lof_threshold)?;
        self.min_points_for_density = cfg.usize_or("clean.min_points_for_density", self.min_points_for_density)?;
        self.max_rounds = cfg.usize_or("clean.max_density_rounds", self.max_rounds)?;
        self.validate()?;
        Ok(self)
    }

    pub fn write_config(&self, cfg: &mut KvConfig) {
        cfg.set("clean.eps", self.eps);
        cfg.set("clean.min_pts", self.min_pts);
        cfg.set("clean.lof_k", self.k);
        cfg.set("clean.lof_threshold", self.lof_threshold);
        cfg.set("clean.min_points_for_density", self.min_points_for_density);
        cfg.set("clean.max_density_rounds", self.max_rounds);
    }
}

/// Mean and standard deviation of wind speed and power used to place points
/// in the standardized power-curve plane.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardization {
    /// Fit on the rows `labels` keeps. `None` when nothing is kept.
    pub fn fit(frame: &RawScadaFrame, labels: &OutlierLabeling) -> Option<Self> {
        let idx: Vec<usize> = (0..frame.len()).filter(|&i| labels.is_keep(i)).collect();
        if idx.is_empty() {
            return None;
        }
        let col = |c: Channel| idx.iter().map(|&i| frame.channel(c)[i]).collect::<Vec<_>>();
        let (w, p) = (col(Channel::WindSpeed), col(Channel::Power));
        Some(Self {
            mean: [mean(&w), mean(&p)],
            std: [std_dev(&w).max(1e-8), std_dev(&p).max(1e-8)],
        })
    }

    pub fn apply(&self, wind: f64, power: f64) -> [f64; 2] {
        [
            (wind - self.mean[0]) / self.std[0],
            (power - self.mean[1]) / self.std[1],
        ]
    }
}

/// One DBSCAN pass followed by LOF on the DBSCAN survivors. Returns the
/// rejection reason for each input point.
pub(crate) fn density_pass(points: &[f64], cfg: &DensityConfig, warnings: &mut Vec<String>) -> Result<Vec<Option<Reason>>> {
    let m = points.len() / 2;
    let clusters = dbscan(points, 2, cfg.eps, cfg.min_pts)?;
    let mut out: Vec<Option<Reason>> = clusters
        .iter()
        .map(|c| c.is_noise().then_some(Reason::DbscanNoise))
        .collect();
    let survivors: Vec<usize> = (0..m).filter(|&i| out[i].is_none()).collect();
    if survivors.len() <= cfg.k {
        warnings.push(format!(
            "LOF skipped: {} DBSCAN survivors for k = {}",
            survivors.len(),
            cfg.k
        ));
        return Ok(out);
    }
    let sub: Vec<f64> = survivors.iter().flat_map(|&i| [points[2 * i], points[2 * i + 1]]).collect();
    let scores = lof(&sub, 2, cfg.k)?;
    for (&i, &s) in survivors.iter().zip(&scores) {
        if s > cfg.lof_threshold {
            out[i] = Some(Reason::Lof);
        }
    }
    Ok(out)
}

/// DBSCAN then LOF refinement of the rows `prior` keeps, in the standardized
/// (wind speed, power) plane. Standardization statistics are fitted on the
/// kept rows.
pub fn density_refine(frame: &RawScadaFrame, prior: &OutlierLabeling, cfg: &DensityConfig) -> Result<OutlierLabeling> {
    match Standardization::fit(frame, prior) {
        Some(stats) => density_refine_with(frame, prior, cfg, &stats),
        None => Ok(prior.clone()),
    }
}

/// [`density_refine`] with fixed standardization statistics.
///
/// Rejected points leave the neighbourhoods of their neighbours, which can
/// push further points over the LOF threshold, so passes repeat until one
/// rejects nothing. The surviving set is then stable under another call.
pub fn density_refine_with(
    frame: &RawScadaFrame,
    prior: &OutlierLabeling,
    cfg: &DensityConfig,
    stats: &Standardization,
) -> Result<OutlierLabeling> {
    if prior.len() != frame.len() {
        return Err(Error::invalid(format!(
            "density_refine: {} labels for {} rows",
            prior.len(),
            frame.len()
        )));
    }
    cfg.validate()?;
    let mut out = prior.clone();
    let wind = frame.channel(Channel::WindSpeed);
    let power = frame.channel(Channel::Power);
    let mut kept: Vec<usize> = (0..frame.len()).filter(|&i| out.is_keep(i)).collect();
    if kept.len() < cfg.min_points_for_density {
        if !kept.is_empty() {
            out.warnings.push(format!(
                "{}: density refinement skipped ({} points < {})",
                frame.turbine_id,
                kept.len(),
                cfg.min_points_for_density
            ));
        }
        return Ok(out);
    }
    for round in 0.. {
        if round == cfg.max_rounds {
            out.warnings.push(format!(
                "{}: density refinement did not settle within {} rounds",
                frame.turbine_id, cfg.max_rounds
            ));
            break;
        }
        if kept.len() < cfg.min_points_for_density {
            break;
        }
        let pts: Vec<f64> = kept.iter().flat_map(|&i| stats.apply(wind[i], power[i])).collect();
        let mut pass_warnings = Vec::new();
        let verdicts = density_pass(&pts, cfg, &mut pass_warnings)?;
        if round == 0 {
            out.warnings.extend(pass_warnings.into_iter().map(|w| format!("{}: {w}", frame.turbine_id)));
        }
        let mut changed = false;
        for (&i, v) in kept.iter().zip(&verdicts) {
            if let Some(r) = v {
                out.reject_if_kept(i, *r);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        kept.retain(|&i| out.is_keep(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_rejected_prior_is_returned_unchanged() {
        let f = RawScadaFrame::new("T", vec![0, 600], [vec![1.0; 2], vec![1.0; 2], vec![1.0; 2], vec![1.0; 2]], None).unwrap();
        let mut prior = OutlierLabeling::all_keep(2);
        prior.reject_if_kept(0, Reason::Range);
        prior.reject_if_kept(1, Reason::Missing);
        assert_eq!(density_refine(&f, &prior, &DensityConfig::default()).unwrap(), prior);
    }

    #[test]
    fn too_few_points_warns() {
        let f = RawScadaFrame::new("T", vec![0, 600], [vec![1.0; 2], vec![1.0; 2], vec![1.0; 2], vec![1.0; 2]], None).unwrap();
        let out = density_refine(&f, &OutlierLabeling::all_keep(2), &DensityConfig::default()).unwrap();
        assert_eq!(out.keep_count(), 2);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn config_round_trip() {
        let d = DensityConfig { eps: 0.07, k: 15, ..Default::default() };
        let mut kv = KvConfig::new();
        d.write_config(&mut kv);
        assert_eq!(DensityConfig::default().apply_config(&kv).unwrap(), d);
    }
}
