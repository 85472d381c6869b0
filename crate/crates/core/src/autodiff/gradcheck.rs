use super::graph::{Graph, Var};
use super::kernels::splitmix64;
use super::params::{BoundParams, ParamSet};
use crate::error::{Error, Result};

/// Denominator floor of the relative error. Central differences at
/// `h = 1e-5` carry roughly `1e-11` of rounding noise on an O(1) loss, so a
/// gradient entry of `3e-8` cannot be resolved to `1e-4` relative; entries
/// below the floor are compared on the floor's scale instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compare analytic gradients against central finite differences.
///
/// `loss` builds a scalar on the given graph from the bound parameters and
/// must be deterministic (evaluation mode). Up to `max_coords` coordinates
/// per tensor are checked. Returns the largest
/// `|analytic − numeric| / max(|analytic|, |numeric|, GRADCHECK_FLOOR)`.
pub fn finite_diff_check<F>(params: &ParamSet, h: f64, max_coords: usize, loss: F) -> Result<f64>
where
    F: Fn(&mut Graph, &BoundParams) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite_diff_check: step {h} must be > 0")));
    }
    let mut g = Graph::eval();
    let bound = params.register(&mut g, true);
    let out = loss(&mut g, &bound)?;
    let mut grads = g.backward(out)?;
    let analytic = params.gradients_for(&bound, &mut grads);

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::eval();
        let bound = p.register(&mut g, false);
        let out = loss(&mut g, &bound)?;
        Ok(g.value(out).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for (ti, tensor) in params.tensors().iter().enumerate() {
        for j in sample_coords(tensor.numel(), max_coords, ti as u64) {
            let orig = tensor.data()[j];
            probe.tensors_mut()[ti].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe.tensors_mut()[ti].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe.tensors_mut()[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn sample_coords(numel: usize, max: usize, salt: u64) -> Vec<usize> {
    if numel <= max {
        return (0..numel).collect();
    }
    let offset = (splitmix64(salt) % numel as u64) as usize;
    let stride = numel / max;
    (0..max).map(|i| (offset + i * stride) % numel).collect()
}
