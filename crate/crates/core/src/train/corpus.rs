//! Synthetic univariate corpus for pre-training.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::series::{NormStats, S3Sequence};
use crate::util::rng_for;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Stationary AR(2) with random stable coefficients.
    Autoregressive,
    /// Two to four sinusoids with random periods plus noise and a drift.
    SeasonalMixture,
    /// Piecewise AR(1) whose level and persistence switch at random times.
    RegimeSwitching,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Autoregressive, Regime::SeasonalMixture, Regime::RegimeSwitching];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Autoregressive => "ar",
            Regime::SeasonalMixture => "seasonal",
            Regime::RegimeSwitching => "switching",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime `{s}`")))
    }

    fn generate(self, rng: &mut impl Rng, length: usize) -> Vec<f64> {
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::with_capacity(length);
        match self {
            Regime::Autoregressive => {
                // Roots inside the unit circle keep the process stationary.
                let r1: f64 = rng.random_range(-0.95..0.95);
                let r2: f64 = rng.random_range(-0.95..0.95);
                let (a1, a2) = (r1 + r2, -r1 * r2);
                let (mut x1, mut x2) = (0.0, 0.0);
                for _ in 0..length {
                    let x = a1 * x1 + a2 * x2 + noise.sample(rng);
                    out.push(x);
                    (x2, x1) = (x1, x);
                }
            }
            Regime::SeasonalMixture => {
                let terms: Vec<(f64, f64, f64)> = (0..rng.random_range(2..=4))
                    .map(|_| {
                        (
                            rng.random_range(6.0..300.0),
                            rng.random_range(0.2..2.0),
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                let sigma = rng.random_range(0.05..0.5);
                let drift = rng.random_range(-1.0..1.0) / length.max(1) as f64;
                for t in 0..length {
                    let tf = t as f64;
                    let s: f64 = terms
                        .iter()
                        .map(|&(period, amp, phase)| amp * (std::f64::consts::TAU * tf / period + phase).sin())
                        .sum();
                    out.push(s + drift * tf + sigma * noise.sample(rng));
                }
            }
            Regime::RegimeSwitching => {
                let mut level = 0.0;
                let mut phi = 0.8;
                let mut x: f64 = 0.0;
                for _ in 0..length {
                    if rng.random_bool(0.01) {
                        level = rng.random_range(-3.0..3.0);
                        phi = rng.random_range(0.0..0.98);
                    }
                    x = level + phi * (x - level) + 0.5 * noise.sample(rng);
                    out.push(x);
                }
            }
        }
        out
    }
}

/// `samples_per_regime` normalized series of `length` points per regime,
/// shuffled deterministically by `seed`.
pub fn pretrain_corpus(regimes: &[Regime], samples_per_regime: usize, length: usize, seed: u64) -> Result<Vec<S3Sequence>> {
    if length == 0 {
        return Err(Error::invalid("pretrain corpus length must be > 0"));
    }
    let mut out = Vec::with_capacity(regimes.len() * samples_per_regime);
    for (r, regime) in regimes.iter().enumerate() {
        for k in 0..samples_per_regime {
            let mut rng = rng_for(seed, 0xC0 + ((r as u64) << 32) + k as u64);
            let raw = regime.generate(&mut rng, length);
            let stats = NormStats::fit(&raw)?;
            out.push(S3Sequence {
                values: stats.normalize(&raw),
                channel: None,
                stats,
                turbine_id: format!("{}-{k}", regime.name()),
                start: 0,
            });
        }
    }
    out.shuffle(&mut rng_for(seed, 0xC0FFEE));
    Ok(out)
}
