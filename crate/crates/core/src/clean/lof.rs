use super::kdtree::KdTree;
use crate::error::{Error, Result};

/// Added to the mean reachability distance so duplicate points get a large
/// but finite density.
pub const LRD_EPSILON: f64 = 1e-10;

/// Local outlier factor of every row of a row-major `M×dim` matrix.
///
/// Uses exactly `k` neighbours per point, ties broken by ascending index.
/// `lrd(p) = 1 / (mean reach_dist(p, o) + LRD_EPSILON)` and
/// `LOF(p) = mean lrd(o) / lrd(p)` over the neighbours `o` of `p`.
pub fn lof(points: &[f64], dim: usize, k: usize) -> Result<Vec<f64>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::invalid(format!("lof: {} values do not form rows of {dim}", points.len())));
    }
    let m = points.len() / dim;
    if k == 0 || k >= m {
        return Err(Error::invalid(format!("lof: need 1 <= k < M, got k={k}, M={m}")));
    }
    let tree = KdTree::new(points, dim);
    let neighbours: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| {
            tree.knn_of(i, k)
                .into_iter()
                .map(|(j, d2)| (j, d2.sqrt()))
                .collect()
        })
        .collect();
    let k_dist: Vec<f64> = neighbours.iter().map(|n| n[k - 1].1).collect();
    let lrd: Vec<f64> = neighbours
        .iter()
        .map(|n| {
            let reach: f64 = n.iter().map(|&(o, d)| d.max(k_dist[o])).sum();
            1.0 / (reach / k as f64 + LRD_EPSILON)
        })
        .collect();
    Ok(neighbours
        .iter()
        .enumerate()
        .map(|(p, n)| n.iter().map(|&(o, _)| lrd[o]).sum::<f64>() / k as f64 / lrd[p])
        .collect())
}
