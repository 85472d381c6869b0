use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::models::LstmConfig;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Evaluation-mode LSTM that carries its state between calls, so recursive
/// forecasting reads each input once.
pub(crate) struct LstmStepper<'a> {
    cfg: &'a LstmConfig,
    layers: Vec<(&'a [f64], &'a [f64], &'a [f64])>,
    head_w: &'a [f64],
    head_b: &'a [f64],
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    z: Vec<f64>,
}

impl<'a> LstmStepper<'a> {
    pub(crate) fn new(params: &'a ParamSet, cfg: &'a LstmConfig) -> Result<Self> {
        let get = |name: &str| {
            params
                .get(name)
                .map(|t| t.data())
                .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
        };
        let layers = (0..cfg.layers)
            .map(|l| {
                Ok((
                    get(&format!("lstm{l}.w_ih"))?,
                    get(&format!("lstm{l}.w_hh"))?,
                    get(&format!("lstm{l}.b"))?,
                ))
            })
            .collect::<Result<_>>()?;
        let hu = cfg.hidden_units;
        Ok(Self {
            cfg,
            layers,
            head_w: get("head.w")?,
            head_b: get("head.b")?,
            h: vec![vec![0.0; hu]; cfg.layers],
            c: vec![vec![0.0; hu]; cfg.layers],
            z: vec![0.0; 4 * hu],
        })
    }

    /// Feed one time step; returns the prediction of the next one.
    pub(crate) fn step(&mut self, x: &[f64]) -> Vec<f64> {
        let hu = self.cfg.hidden_units;
        let mut input = x.to_vec();
        for (l, &(w_ih, w_hh, bias)) in self.layers.iter().enumerate() {
            let z = &mut self.z;
            z.iter_mut().for_each(|v| *v = 0.0);
            for (k, &xk) in input.iter().enumerate() {
                for (zj, w) in z.iter_mut().zip(&w_ih[k * 4 * hu..(k + 1) * 4 * hu]) {
                    *zj += xk * w;
                }
            }
            for (k, &hk) in self.h[l].iter().enumerate() {
                for (zj, w) in z.iter_mut().zip(&w_hh[k * 4 * hu..(k + 1) * 4 * hu]) {
                    *zj += hk * w;
                }
            }
            for (zj, b) in z.iter_mut().zip(bias) {
                *zj += b;
            }
            for j in 0..hu {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hu + j]);
                let g = z[2 * hu + j].tanh();
                let o = sigmoid(z[3 * hu + j]);
                self.c[l][j] = f * self.c[l][j] + i * g;
                self.h[l][j] = o * self.c[l][j].tanh();
            }
            input.clone_from(&self.h[l]);
        }
        let out_dim = self.head_b.len();
        let mut y = self.head_b.to_vec();
        for (k, &hk) in input.iter().enumerate() {
            for (yj, w) in y.iter_mut().zip(&self.head_w[k * out_dim..(k + 1) * out_dim]) {
                *yj += hk * w;
            }
        }
        y
    }
}
