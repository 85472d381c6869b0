use super::config::{BaselineTransformerConfig, TimerConfig, TIME_SLOTS};
use crate::autodiff::{BoundParams, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Additive mask hiding every key position after the query position.
pub fn causal_mask(n: usize) -> Tensor {
    let data = (0..n * n)
        .map(|i| if i % n > i / n { f64::NEG_INFINITY } else { 0.0 })
        .collect();
    Tensor::new(vec![n, n], data).expect("square mask")
}

/// Next-token prediction over `[B, N, S]` univariate tokens.
///
/// Output row `i` estimates token `i + 1` from tokens `0..=i`. `time` holds
/// one time-embedding slot per token (row-major `B×N`) and is required
/// exactly when the config enables the time embedding.
pub fn timer_forward(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &TimerConfig,
    tokens: Var,
    time: Option<&[usize]>,
) -> Result<Var> {
    decoder_forward(g, params, cfg, cfg.patch, tokens, time)
}

/// Next-token prediction over `[B, N, C·S]` channel-concatenated tokens.
pub fn baseline_transformer_forward(
    g: &mut Graph,
    params: &BoundParams,
    cfg: &BaselineTransformerConfig,
    tokens: Var,
    time: Option<&[usize]>,
) -> Result<Var> {
    decoder_forward(g, params, &cfg.decoder, cfg.token_width(), tokens, time)
}

fn decoder_forward(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &TimerConfig,
    width: usize,
    tokens: Var,
    time: Option<&[usize]>,
) -> Result<Var> {
    let shape = g.shape(tokens).to_vec();
    if shape.len() != 3 || shape[2] != width || shape[1] == 0 || shape[1] > cfg.max_tokens() {
        return Err(Error::invalid(format!(
            "decoder input {shape:?}: expected [batch, 1..={}, {width}]",
            cfg.max_tokens()
        )));
    }
    let (b, n, d) = (shape[0], shape[1], cfg.model_dim);
    let (heads, dh) = (cfg.heads, cfg.model_dim / cfg.heads);

    let embedded = g.matmul(tokens, p.var("embed.w")?)?;
    let pos = g.gather_rows(p.var("pos")?, &(0..n).collect::<Vec<_>>())?;
    let mut x = g.add(embedded, pos)?;
    match (cfg.use_time_embedding, time) {
        (true, Some(slots)) => {
            if slots.len() != b * n || slots.iter().any(|&s| s >= TIME_SLOTS) {
                return Err(Error::invalid(format!(
                    "time embedding needs {} slots below {TIME_SLOTS}",
                    b * n
                )));
            }
            let te = g.gather_rows(p.var("te")?, slots)?;
            let te = g.reshape(te, &[b, n, d])?;
            x = g.add(x, te)?;
        }
        (true, None) => return Err(Error::invalid("time embedding enabled but no time slots given")),
        (false, Some(_)) => return Err(Error::invalid("time slots given but the time embedding is disabled")),
        (false, None) => {}
    }
    x = g.dropout(x, cfg.dropout);

    let mask = causal_mask(n);
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.layers {
        let w = |s: &str| p.var(&format!("block{l}.{s}"));

        let h = g.layer_norm(x, w("ln1.g")?, w("ln1.b")?)?;
        let split_heads = |g: &mut Graph, m: Var| -> Result<Var> {
            let t = g.reshape(m, &[b, n, heads, dh])?;
            g.permute(t, &[0, 2, 1, 3])
        };
        let q = g.matmul(h, w("attn.q")?)?;
        let q = split_heads(g, q)?;
        let k = g.matmul(h, w("attn.k")?)?;
        let k = split_heads(g, k)?;
        let v = g.matmul(h, w("attn.v")?)?;
        let v = split_heads(g, v)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scores = g.scale(scores, inv_sqrt);
        let attn = g.softmax(scores, Some(&mask))?;
        let attn = g.dropout(attn, cfg.dropout);
        let ctx = g.matmul(attn, v)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, n, d])?;
        let out = g.matmul(ctx, w("attn.o")?)?;
        let out = g.dropout(out, cfg.dropout);
        x = g.add(x, out)?;

        let h = g.layer_norm(x, w("ln2.g")?, w("ln2.b")?)?;
        let f = g.matmul(h, w("ffn.w1")?)?;
        let f = g.add(f, w("ffn.b1")?)?;
        let f = g.gelu(f);
        let f = g.matmul(f, w("ffn.w2")?)?;
        let f = g.add(f, w("ffn.b2")?)?;
        let f = g.dropout(f, cfg.dropout);
        x = g.add(x, f)?;
    }
    let x = g.layer_norm(x, p.var("final_ln.g")?, p.var("final_ln.b")?)?;
    let y = g.matmul(x, p.var("head.w")?)?;
    g.add(y, p.var("head.b")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, ModelConfig};

    #[test]
    fn mask_is_lower_triangular() {
        let m = causal_mask(3);
        assert_eq!(m.data()[1], f64::NEG_INFINITY);
        assert_eq!(m.data()[3], 0.0);
        assert_eq!(m.data()[8], 0.0);
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let cfg = TimerConfig::tiny();
        let mut params = init_params(&ModelConfig::Timer(cfg.clone()), 0).unwrap();
        params.get_mut("head.w").unwrap().data_mut().fill(0.0);
        let mut g = Graph::eval();
        let bound = params.register(&mut g, false);
        let x = g.constant(Tensor::full(&[2, 4, 8], 0.3));
        let y = timer_forward(&mut g, &bound, &cfg, x, None).unwrap();
        assert_eq!(g.shape(y), [2, 4, 8]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = TimerConfig::tiny();
        let params = init_params(&ModelConfig::Timer(cfg.clone()), 0).unwrap();
        let mut g = Graph::eval();
        let bound = params.register(&mut g, false);
        let too_long = g.constant(Tensor::zeros(&[1, 5, 8]));
        assert!(timer_forward(&mut g, &bound, &cfg, too_long, None).is_err());
        let wrong_width = g.constant(Tensor::zeros(&[1, 2, 7]));
        assert!(timer_forward(&mut g, &bound, &cfg, wrong_width, None).is_err());
    }
}
