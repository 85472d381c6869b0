use super::config::LstmConfig;
use crate::autodiff::{BoundParams, Graph, Var};
use crate::error::{Error, Result};

/// Stacked unidirectional LSTM over `[B, T, C]` inputs.
///
/// Output step `t` is the head applied to the top layer's hidden state after
/// reading steps `0..=t`, i.e. the prediction of step `t + 1`. Gates are laid
/// out `[input, forget, cell, output]` along the last axis.
pub fn lstm_forward(g: &mut Graph, p: &BoundParams, cfg: &LstmConfig, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || shape[1] == 0 || shape[2] != cfg.input_dim {
        return Err(Error::invalid(format!(
            "LSTM input {shape:?}: expected [batch, steps >= 1, {}]",
            cfg.input_dim
        )));
    }
    let (b, t, h) = (shape[0], shape[1], cfg.hidden_units);
    let mut seq: Vec<Var> = (0..t)
        .map(|s| {
            let step = g.slice(x, 1, s, 1)?;
            g.reshape(step, &[b, cfg.input_dim])
        })
        .collect::<Result<_>>()?;

    for l in 0..cfg.layers {
        let w_ih = p.var(&format!("lstm{l}.w_ih"))?;
        let w_hh = p.var(&format!("lstm{l}.w_hh"))?;
        let bias = p.var(&format!("lstm{l}.b"))?;
        if l > 0 {
            for v in seq.iter_mut() {
                *v = g.dropout(*v, cfg.dropout);
            }
        }
        let mut hs = g.constant(crate::autodiff::Tensor::zeros(&[b, h]));
        let mut cs = hs;
        for v in seq.iter_mut() {
            let a = g.matmul(*v, w_ih)?;
            let r = g.matmul(hs, w_hh)?;
            let z = g.add(a, r)?;
            let z = g.add(z, bias)?;
            let gate = |g: &mut Graph, k: usize| g.slice(z, 1, k * h, h);
            let i = gate(g, 0)?;
            let i = g.sigmoid(i);
            let f = gate(g, 1)?;
            let f = g.sigmoid(f);
            let c_in = gate(g, 2)?;
            let c_in = g.tanh(c_in);
            let o = gate(g, 3)?;
            let o = g.sigmoid(o);
            let keep = g.mul(f, cs)?;
            let write = g.mul(i, c_in)?;
            cs = g.add(keep, write)?;
            let ct = g.tanh(cs);
            hs = g.mul(o, ct)?;
            *v = hs;
        }
    }
    let stacked: Vec<Var> = seq
        .into_iter()
        .map(|v| g.reshape(v, &[b, 1, h]))
        .collect::<Result<_>>()?;
    let top = if stacked.len() == 1 { stacked[0] } else { g.concat(&stacked, 1)? };
    let top = g.dropout(top, cfg.dropout);
    let y = g.matmul(top, p.var("head.w")?)?;
    g.add(y, p.var("head.b")?)
}
