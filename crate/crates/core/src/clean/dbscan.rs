use std::collections::VecDeque;

use super::kdtree::{Alive, KdTree};
use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ClusterLabel {
    Cluster(usize),
    Noise,
}

impl ClusterLabel {
    pub fn is_noise(self) -> bool {
        self == ClusterLabel::Noise
    }
}

/// DBSCAN over a row-major `M×dim` matrix.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within Euclidean distance `eps`, inclusive. Clusters are numbered in the
/// order their lowest-index core point is visited; a border point reachable
/// from several clusters joins the lowest-numbered one.
pub fn dbscan(points: &[f64], dim: usize, eps: f64, min_pts: usize) -> Result<Vec<ClusterLabel>> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(Error::invalid(format!("dbscan: need eps > 0 and min_pts >= 1, got {eps}, {min_pts}")));
    }
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::invalid(format!("dbscan: {} values do not form rows of {dim}", points.len())));
    }
    let m = points.len() / dim;
    if m == 0 {
        return Ok(Vec::new());
    }
    let tree = KdTree::new(points, dim);
    let mut nb = Vec::new();
    let core: Vec<bool> = (0..m).map(|i| tree.has_at_least(tree.point(i), eps, min_pts)).collect();

    let mut labels = vec![ClusterLabel::Noise; m];
    let mut assigned = vec![false; m];
    let mut unassigned = Alive::new(&tree);
    // Within one expansion the visiting order cannot change membership, so
    // neighbour lists need no sorting.
    let mut queue = VecDeque::new();
    let mut next = 0;
    for seed in 0..m {
        if assigned[seed] || !core[seed] {
            continue;
        }
        let id = next;
        next += 1;
        assigned[seed] = true;
        unassigned.remove(seed);
        labels[seed] = ClusterLabel::Cluster(id);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            tree.within_alive(tree.point(p), eps, &unassigned, &mut nb);
            for &q in &nb {
                if !assigned[q] {
                    assigned[q] = true;
                    unassigned.remove(q);
                    labels[q] = ClusterLabel::Cluster(id);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let l = dbscan(&[0.0, 0.5, 1.0, 10.0], 1, 1.5, 2).unwrap();
        assert_eq!(l[..3], [ClusterLabel::Cluster(0); 3]);
        assert_eq!(l[3], ClusterLabel::Noise);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let l = dbscan(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 2, 1e-9, 3).unwrap();
        assert!(l.iter().all(|&c| c == ClusterLabel::Cluster(0)));
    }

    #[test]
    fn tiny_eps_gives_all_noise() {
        let l = dbscan(&[0.0, 1.0, 2.0], 1, 1e-12, 2).unwrap();
        assert!(l.iter().all(|c| c.is_noise()));
        assert!(dbscan(&[], 2, 0.1, 2).unwrap().is_empty());
        assert!(dbscan(&[0.0], 1, 0.0, 2).is_err());
    }

    #[test]
    fn border_joins_first_cluster() {
        // Cores at 0 and 2; the point at 1 is a border of both.
        let pts = [0.0, -0.5, -0.3, 1.0, 2.0, 2.3, 2.5];
        let l = dbscan(&pts, 1, 1.0, 4).unwrap();
        assert_eq!(l[3], ClusterLabel::Cluster(0));
        assert_eq!(l[4], ClusterLabel::Cluster(1));
    }
}
