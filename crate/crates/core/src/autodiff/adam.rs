use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moments and step counter for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Rejects the whole update, leaving
    /// parameters and moments untouched, if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::invalid(format!(
                "adam: {} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        if !(lr >= 0.0) {
            return Err(Error::invalid(format!("adam: learning rate {lr} must be >= 0")));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            }
            if lr == 0.0 {
                continue;
            }
            let pd = p.data_mut();
            for j in 0..g.len() {
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                pd[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = single(1.5);
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &[Tensor::scalar(0.0)], 0.1).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let mut p = single(1.0);
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &[Tensor::scalar(1.0)], 0.1).unwrap();
        let w = p.get("w").unwrap().data()[0];
        assert!((w - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((w - 0.9).abs() < 1e-8);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut p = single(0.0);
        let mut adam = AdamState::new(&p);
        for _ in 0..1000 {
            let w = p.get("w").unwrap().data()[0];
            adam.step(&mut p, &[Tensor::scalar(2.0 * (w - 3.0))], 0.05).unwrap();
        }
        assert!((p.get("w").unwrap().data()[0] - 3.0).abs() < 0.01);
    }

    #[test]
    fn nan_gradient_is_rejected_by_name() {
        let mut p = single(1.0);
        let mut adam = AdamState::new(&p);
        let err = adam.step(&mut p, &[Tensor::scalar(f64::NAN)], 0.1).unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient(n) if n == "w"));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(p.get("w").unwrap().data(), &[1.0]);
    }

    #[test]
    fn zero_lr_is_bitwise_identity() {
        let mut p = single(-0.0);
        p.insert("v", Tensor::vector(vec![1.25, -3.5e-7])).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        for _ in 0..5 {
            adam.step(&mut p, &[Tensor::scalar(0.3), Tensor::vector(vec![-2.0, 7.0])], 0.0)
                .unwrap();
        }
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    }
}
