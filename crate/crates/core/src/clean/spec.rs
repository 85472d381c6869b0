use super::frame::Channel;
use crate::config::KvConfig;
use crate::error::{Error, Result};

/// Operating envelope of one turbine model.
#[derive(Clone, Debug, PartialEq)]
pub struct TurbineSpec {
    /// m/s
    pub cut_in_speed: f64,
    /// m/s
    pub rated_speed: f64,
    /// m/s
    pub cut_out_speed: f64,
    /// kW
    pub rated_power: f64,
    /// Degrees; upper bound for pitch inside the MPPT band.
    pub mppt_pitch_limit: f64,
    /// Fraction of rated power below which above-rated points are rejected.
    pub power_floor_fraction: f64,
    /// Plausible `(min, max)` per channel, indexed by [`Channel::index`].
    pub ranges: [(f64, f64); 4],
    /// Optional distribution trimming: also reject values outside the
    /// `[q, 1 − q]` empirical quantiles of each channel.
    pub trim_quantile: Option<f64>,
}

impl TurbineSpec {
    /// 1.5 MW onshore class turbine.
    pub fn onshore_1_5mw() -> Self {
        Self::with_rating(1500.0, 11.0, 1800.0)
    }

    /// 4 MW offshore class turbine.
    pub fn offshore_4mw() -> Self {
        Self::with_rating(4000.0, 12.5, 1500.0)
    }

    /// Defaults for a turbine of the given rating; ranges are derived from
    /// the rating and `rated_generator_rpm`.
    pub fn with_rating(rated_power: f64, rated_speed: f64, rated_generator_rpm: f64) -> Self {
        Self {
            cut_in_speed: 3.0,
            rated_speed,
            cut_out_speed: 25.0,
            rated_power,
            mppt_pitch_limit: 5.0,
            power_floor_fraction: 0.9,
            ranges: [
                (0.0, 40.0),
                (-0.05 * rated_power, 1.2 * rated_power),
                (0.0, 1.2 * rated_generator_rpm),
                (-40.0, 50.0),
            ],
            trim_quantile: None,
        }
    }

    pub fn range(&self, c: Channel) -> (f64, f64) {
        self.ranges[c.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.cut_in_speed
            && self.cut_in_speed < self.rated_speed
            && self.rated_speed < self.cut_out_speed;
        if !ok {
            return Err(Error::Config(format!(
                "turbine speeds must satisfy 0 < cut_in ({}) < rated ({}) < cut_out ({})",
                self.cut_in_speed, self.rated_speed, self.cut_out_speed
            )));
        }
        if !(self.power_floor_fraction > 0.0 && self.power_floor_fraction < 1.0) {
            return Err(Error::Config(format!(
                "power_floor_fraction {} must be in (0, 1)",
                self.power_floor_fraction
            )));
        }
        if !(self.rated_power > 0.0) {
            return Err(Error::Config("rated_power must be > 0".into()));
        }
        for c in Channel::ALL {
            let (lo, hi) = self.range(c);
            if !(lo < hi) {
                return Err(Error::Config(format!("range for {c} is empty: ({lo}, {hi})")));
            }
        }
        if let Some(q) = self.trim_quantile {
            if !(q > 0.0 && q < 0.5) {
                return Err(Error::Config(format!("trim quantile {q} must be in (0, 0.5)")));
            }
        }
        Ok(())
    }

    /// Overlay `turbine.*` keys from a config onto `self`.
    pub fn apply_config(mut self, cfg: &KvConfig) -> Result<Self> {
        if let Some(v) = cfg.get_f64("turbine.cut_in_speed")? {
            self.cut_in_speed = v;
        }
        if let Some(v) = cfg.get_f64("turbine.rated_speed")? {
            self.rated_speed = v;
        }
        if let Some(v) = cfg.get_f64("turbine.cut_out_speed")? {
            self.cut_out_speed = v;
        }
        if let Some(v) = cfg.get_f64("turbine.rated_power")? {
            let old = self.rated_power;
            self.rated_power = v;
            // Power range defaults scale with the rating unless overridden below.
            let (lo, hi) = self.ranges[Channel::Power.index()];
            self.ranges[Channel::Power.index()] = (lo / old * v, hi / old * v);
        }
        if let Some(v) = cfg.get_f64("turbine.mppt_pitch_limit")? {
            self.mppt_pitch_limit = v;
        }
        if let Some(v) = cfg.get_f64("turbine.power_floor_fraction")? {
            self.power_floor_fraction = v;
        }
        for c in Channel::ALL {
            let (mut lo, mut hi) = self.ranges[c.index()];
            if let Some(v) = cfg.get_f64(&format!("turbine.range.{}.min", c.name()))? {
                lo = v;
            }
            if let Some(v) = cfg.get_f64(&format!("turbine.range.{}.max", c.name()))? {
                hi = v;
            }
            self.ranges[c.index()] = (lo, hi);
        }
        if let Some(q) = cfg.get_f64("turbine.trim_quantile")? {
            self.trim_quantile = (q > 0.0).then_some(q);
        }
        self.validate()?;
        Ok(self)
    }

    /// Write every field as `turbine.*` keys.
    pub fn write_config(&self, cfg: &mut KvConfig) {
        cfg.set("turbine.cut_in_speed", self.cut_in_speed);
        cfg.set("turbine.rated_speed", self.rated_speed);
        cfg.set("turbine.cut_out_speed", self.cut_out_speed);
        cfg.set("turbine.rated_power", self.rated_power);
        cfg.set("turbine.mppt_pitch_limit", self.mppt_pitch_limit);
        cfg.set("turbine.power_floor_fraction", self.power_floor_fraction);
        for c in Channel::ALL {
            let (lo, hi) = self.range(c);
            cfg.set(&format!("turbine.range.{}.min", c.name()), lo);
            cfg.set(&format!("turbine.range.{}.max", c.name()), hi);
        }
        cfg.set("turbine.trim_quantile", self.trim_quantile.unwrap_or(0.0));
    }
}

impl Default for TurbineSpec {
    fn default() -> Self {
        Self::onshore_1_5mw()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TurbineSpec::onshore_1_5mw().validate().unwrap();
        TurbineSpec::offshore_4mw().validate().unwrap();
    }

    #[test]
    fn rejects_bad_speed_order() {
        let mut s = TurbineSpec::default();
        s.rated_speed = 2.0;
        assert!(s.validate().is_err());
        let mut s = TurbineSpec::default();
        s.power_floor_fraction = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut s = TurbineSpec::offshore_4mw();
        s.mppt_pitch_limit = 7.5;
        s.trim_quantile = Some(0.001);
        let mut cfg = KvConfig::new();
        s.write_config(&mut cfg);
        let back = TurbineSpec::default().apply_config(&cfg).unwrap();
        assert_eq!(back, s);
    }
}
