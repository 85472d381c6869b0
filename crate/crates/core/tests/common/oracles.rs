//! Brute-force oracles shared by the cleaning and acceptance suites.

use rand::Rng;
use windtimer::clean::{ClusterLabel, LRD_EPSILON};
use windtimer::util::rng_for;

fn dist(p: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    (0..dim)
        .map(|a| {
            let d = p[i * dim + a] - p[j * dim + a];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Clusters are connected components of core points, numbered by their
/// lowest core index; a border point joins the lowest-numbered cluster
/// among its core neighbours.
pub fn dbscan_oracle(p: &[f64], dim: usize, eps: f64, min_pts: usize) -> Vec<ClusterLabel> {
    let m = p.len() / dim;
    let near = |i: usize, j: usize| dist(p, dim, i, j).powi(2) <= eps * eps;
    let core: Vec<bool> = (0..m).map(|i| (0..m).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp = vec![usize::MAX; m];
    let mut next = 0;
    for s in 0..m {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if core[j] && comp[j] == usize::MAX && near(i, j) {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (0..m)
        .map(|i| {
            if core[i] {
                return ClusterLabel::Cluster(comp[i]);
            }
            (0..m)
                .filter(|&j| core[j] && near(i, j))
                .map(|j| comp[j])
                .min()
                .map_or(ClusterLabel::Noise, ClusterLabel::Cluster)
        })
        .collect()
}

pub fn lof_oracle(p: &[f64], dim: usize, k: usize) -> Vec<f64> {
    let m = p.len() / dim;
    let knn: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut o: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            o.sort_by(|&a, &b| dist(p, dim, i, a).total_cmp(&dist(p, dim, i, b)).then(a.cmp(&b)));
            o.truncate(k);
            o
        })
        .collect();
    let kdist: Vec<f64> = (0..m).map(|i| dist(p, dim, i, knn[i][k - 1])).collect();
    let lrd: Vec<f64> = (0..m)
        .map(|i| {
            let reach: f64 = knn[i].iter().map(|&o| dist(p, dim, i, o).max(kdist[o])).sum();
            1.0 / (reach / k as f64 + LRD_EPSILON)
        })
        .collect();
    (0..m)
        .map(|i| knn[i].iter().map(|&o| lrd[o]).sum::<f64>() / (k as f64 * lrd[i]))
        .collect()
}

pub fn random_instance(seed: u64) -> (Vec<f64>, usize) {
    let mut rng = rng_for(seed, 7);
    let dim = rng.random_range(1..=3);
    let m = rng.random_range(25..=200);
    let lattice = rng.random_bool(0.3);
    let pts = (0..m * dim)
        .map(|_| {
            if lattice {
                rng.random_range(0..8) as f64 * 0.25
            } else {
                let centre = [0.0, 3.0][rng.random_range(0..2)];
                centre + rng.random::<f64>() * 1.5
            }
        })
        .collect();
    (pts, dim)
}
