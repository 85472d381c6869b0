use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{BaselineTransformerConfig, LstmConfig, ModelConfig, TimerConfig, TIME_SLOTS};
use crate::autodiff::{ParamSet, Tensor};
use crate::error::Result;
use crate::util::rng_for;

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Copy, Clone)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Parameter names, shapes and initializers in allocation order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    match cfg {
        ModelConfig::Timer(c) => decoder_layout(c, c.patch),
        ModelConfig::Transformer(c) => decoder_layout(&c.decoder, c.token_width()),
        ModelConfig::Lstm(c) => lstm_layout(c),
    }
}

fn decoder_layout(c: &TimerConfig, width: usize) -> Vec<(String, Vec<usize>, Init)> {
    let d = c.model_dim;
    let mut v = vec![
        ("embed.w".to_string(), vec![width, d], Init::Normal),
        ("pos".to_string(), vec![c.max_tokens(), d], Init::Normal),
    ];
    if c.use_time_embedding {
        v.push(("te".to_string(), vec![TIME_SLOTS, d], Init::Normal));
    }
    for l in 0..c.layers {
        let b = |s: &str| format!("block{l}.{s}");
        v.extend([
            (b("ln1.g"), vec![d], Init::Ones),
            (b("ln1.b"), vec![d], Init::Zeros),
            (b("attn.q"), vec![d, d], Init::Normal),
            (b("attn.k"), vec![d, d], Init::Normal),
            (b("attn.v"), vec![d, d], Init::Normal),
            (b("attn.o"), vec![d, d], Init::Normal),
            (b("ln2.g"), vec![d], Init::Ones),
            (b("ln2.b"), vec![d], Init::Zeros),
            (b("ffn.w1"), vec![d, c.ffn_hidden], Init::Normal),
            (b("ffn.b1"), vec![c.ffn_hidden], Init::Zeros),
            (b("ffn.w2"), vec![c.ffn_hidden, d], Init::Normal),
            (b("ffn.b2"), vec![d], Init::Zeros),
        ]);
    }
    v.extend([
        ("final_ln.g".to_string(), vec![d], Init::Ones),
        ("final_ln.b".to_string(), vec![d], Init::Zeros),
        ("head.w".to_string(), vec![d, width], Init::Normal),
        ("head.b".to_string(), vec![width], Init::Zeros),
    ]);
    v
}

fn lstm_layout(c: &LstmConfig) -> Vec<(String, Vec<usize>, Init)> {
    let h = c.hidden_units;
    let mut v = Vec::new();
    for l in 0..c.layers {
        let input = if l == 0 { c.input_dim } else { h };
        v.extend([
            (format!("lstm{l}.w_ih"), vec![input, 4 * h], Init::Normal),
            (format!("lstm{l}.w_hh"), vec![h, 4 * h], Init::Normal),
            (format!("lstm{l}.b"), vec![4 * h], Init::Zeros),
        ]);
    }
    v.push(("head.w".to_string(), vec![h, c.input_dim], Init::Normal));
    v.push(("head.b".to_string(), vec![c.input_dim], Init::Zeros));
    v
}

/// Names and shapes of every parameter tensor of `cfg`, in allocation order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Learnable scalars of `cfg`, from the layout alone.
pub fn count_params(cfg: &ModelConfig) -> usize {
    layout(cfg).iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
}

/// Fresh parameters: weights from a normal with std [`INIT_STD`] truncated
/// at two standard deviations, biases and layer-norm offsets zero,
/// layer-norm scales one.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = rng_for(seed, 0x1417);
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut out = ParamSet::new();
    for (name, shape, init) in layout(cfg) {
        let n = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal => (0..n).map(|_| truncated(&normal, &mut rng)).collect(),
        };
        out.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok(out)
}

fn truncated(normal: &Normal<f64>, rng: &mut impl Rng) -> f64 {
    loop {
        let x = normal.sample(rng);
        if x.abs() <= 2.0 * INIT_STD {
            return x;
        }
    }
}

/// Parameter count of the channel-dependent baseline.
pub fn count_transformer_params(cfg: &BaselineTransformerConfig) -> usize {
    count_params(&ModelConfig::Transformer(cfg.clone()))
}
