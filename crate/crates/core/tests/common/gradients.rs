//! Finite-difference checks over every graph op and whole models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windtimer::autodiff::{finite_diff_check, BoundParams, Graph, ParamSet, Tensor, Var};
use windtimer::models::{forward, init_params, ModelConfig};
use windtimer::train::autoregressive_loss_graph;
use windtimer::Result;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// `sum(out ∘ W)` for a fixed random `W`, so every output element matters.
fn project(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(&mut rng, g.shape(out)));
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}

/// Max relative error of `f` with respect to random inputs of `inputs`.
pub fn op_error<F>(name: &str, inputs: &[&[usize]], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 31 + 7);
    let mut params = ParamSet::new();
    for (i, shape) in inputs.iter().enumerate() {
        params.insert(format!("x{i}"), random(&mut rng, shape)).unwrap();
    }
    let n = inputs.len();
    finite_diff_check(&params, H, 64, |g: &mut Graph, b: &BoundParams| {
        let vars: Vec<Var> = (0..n).map(|i| b.var(&format!("x{i}")).unwrap()).collect();
        let out = f(g, &vars)?;
        project(g, out, 99)
    })
    .unwrap()
}

fn causal(n: usize) -> Tensor {
    let mut mask = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            mask[i * n + j] = f64::NEG_INFINITY;
        }
    }
    Tensor::new(vec![n, n], mask).unwrap()
}

/// `(op, max relative error)` for every differentiable op, including
/// broadcasting and masked variants.
pub fn all_op_errors() -> Vec<(&'static str, f64)> {
    vec![
        ("matmul", op_error("matmul", &[&[3, 4], &[4, 2]], |g, v| g.matmul(v[0], v[1]))),
        ("matmul_shared", op_error("matmul_shared", &[&[2, 3, 4], &[4, 5]], |g, v| g.matmul(v[0], v[1]))),
        ("matmul_batched", op_error("matmul_batched", &[&[2, 3, 4], &[2, 4, 2]], |g, v| g.matmul(v[0], v[1]))),
        ("add", op_error("add", &[&[2, 3], &[2, 3]], |g, v| g.add(v[0], v[1]))),
        ("add_bcast", op_error("add_bcast", &[&[2, 3, 4], &[4]], |g, v| g.add(v[0], v[1]))),
        ("add_bcast_rev", op_error("add_bcast_rev", &[&[3, 4], &[2, 3, 4]], |g, v| g.add(v[0], v[1]))),
        ("sub", op_error("sub", &[&[2, 3, 4], &[3, 4]], |g, v| g.sub(v[0], v[1]))),
        ("mul", op_error("mul", &[&[5], &[5]], |g, v| g.mul(v[0], v[1]))),
        ("mul_bcast", op_error("mul_bcast", &[&[2, 5], &[5]], |g, v| g.mul(v[0], v[1]))),
        ("mul_self", op_error("mul_self", &[&[4]], |g, v| g.mul(v[0], v[0]))),
        ("scale", op_error("scale", &[&[3, 3]], |g, v| Ok(g.scale(v[0], -2.5)))),
        ("gelu", op_error("gelu", &[&[4, 5]], |g, v| Ok(g.gelu(v[0])))),
        ("relu", op_error("relu", &[&[4, 5]], |g, v| Ok(g.relu(v[0])))),
        ("sigmoid", op_error("sigmoid", &[&[4, 5]], |g, v| Ok(g.sigmoid(v[0])))),
        ("tanh", op_error("tanh", &[&[4, 5]], |g, v| Ok(g.tanh(v[0])))),
        ("softmax", op_error("softmax", &[&[3, 5]], |g, v| g.softmax(v[0], None))),
        ("softmax_masked", op_error("softmax_masked", &[&[2, 4, 4]], |g, v| g.softmax(v[0], Some(&causal(4))))),
        ("layer_norm", op_error("layer_norm", &[&[3, 6], &[6], &[6]], |g, v| g.layer_norm(v[0], v[1], v[2]))),
        ("slice", op_error("slice", &[&[2, 5, 3]], |g, v| g.slice(v[0], 1, 1, 3))),
        ("concat", op_error("concat", &[&[2, 2, 3], &[2, 1, 3]], |g, v| g.concat(&[v[0], v[1]], 1))),
        ("concat_last", op_error("concat_last", &[&[2, 3], &[2, 2], &[2, 1]], |g, v| g.concat(&[v[0], v[1], v[2]], 1))),
        ("reshape", op_error("reshape", &[&[2, 6]], |g, v| g.reshape(v[0], &[3, 4]))),
        ("transpose", op_error("transpose", &[&[2, 3, 4]], |g, v| g.transpose(v[0]))),
        ("permute", op_error("permute", &[&[2, 3, 4, 2]], |g, v| g.permute(v[0], &[0, 2, 1, 3]))),
        ("gather_rows", op_error("gather_rows", &[&[5, 3]], |g, v| g.gather_rows(v[0], &[4, 0, 4, 2]))),
        ("sum", op_error("sum", &[&[3, 4]], |g, v| Ok(g.sum(v[0])))),
        ("mse", op_error("mse", &[&[3, 4], &[3, 4]], |g, v| g.mse(v[0], v[1]))),
    ]
}

/// Gradient error of the next-step loss of a freshly initialized model on
/// one random `[2, rows, width]` batch. Checks up to `coords` entries per
/// parameter tensor.
pub fn model_error(cfg: &ModelConfig, rows: usize, width: usize, time: Option<&[usize]>, coords: usize) -> f64 {
    let params = init_params(cfg, 11).unwrap();
    let x = random(&mut ChaCha8Rng::seed_from_u64(12), &[2, rows, width]);
    finite_diff_check(&params, H, coords, |g, b| {
        let xv = g.constant(x.clone());
        let y = forward(g, b, cfg, xv, time)?;
        autoregressive_loss_graph(g, y, xv)
    })
    .unwrap()
}
