use std::f64::consts::PI;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Next-token MSE over an `n×s` prediction matrix: row `i` of `predicted`
/// is scored against row `i + 1` of `target`, so the first token is never a
/// target and the mean runs over `(n − 1)·s` scalars.
pub fn autoregressive_loss(predicted: &[f64], target: &[f64], n: usize, s: usize) -> Result<f64> {
    if n < 2 || s == 0 || predicted.len() != n * s || target.len() != n * s {
        return Err(Error::invalid(format!(
            "autoregressive_loss: {} predictions and {} targets for {n}×{s} (need n >= 2)",
            predicted.len(),
            target.len()
        )));
    }
    let m = (n - 1) * s;
    let sum: f64 = predicted[..m]
        .iter()
        .zip(&target[s..])
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / m as f64)
}

/// Graph form of [`autoregressive_loss`] over `[B, rows, width]` tensors.
pub fn autoregressive_loss_graph(g: &mut Graph, predicted: Var, input: Var) -> Result<Var> {
    let shape = g.shape(input).to_vec();
    if shape.len() != 3 || shape[1] < 2 || g.shape(predicted) != shape.as_slice() {
        return Err(Error::shape("autoregressive_loss", g.shape(predicted), &shape));
    }
    let rows = shape[1];
    let p = g.slice(predicted, 1, 0, rows - 1)?;
    let t = g.slice(input, 1, 1, rows - 1)?;
    g.mse(p, t)
}

/// `lr0 · ½(1 + cos(π·step/total))`, clamped at 0.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    (lr0 * 0.5 * (1.0 + (PI * frac).cos())).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        assert_eq!(autoregressive_loss(&[1.0, 9.0], &[5.0, 3.0], 2, 1).unwrap(), 4.0);
        let target = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let shifted = [2.0, 3.0, 4.0, 5.0, -1.0, 7.0];
        assert_eq!(autoregressive_loss(&shifted, &target, 3, 2).unwrap(), 0.0);
        let offset: Vec<f64> = [2.0, 3.0, 4.0, 5.0, 0.0, 0.0].iter().map(|v| v + 1.0).collect();
        assert_eq!(autoregressive_loss(&offset, &target, 3, 2).unwrap(), 1.0);
        assert!(autoregressive_loss(&[1.0], &[1.0], 1, 1).is_err());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 0.5), 0.5);
        assert_eq!(cosine_lr(10, 10, 0.5), 0.0);
        assert!((cosine_lr(5, 10, 0.5) - 0.25).abs() < 1e-15);
    }
}
