//! Exact nearest-neighbour queries over a flat `M×D` point matrix.
//!
//! Distances are compared as squared Euclidean sums accumulated in coordinate
//! order, the same arithmetic a brute-force scan performs, so query results
//! (including tie order) match brute force exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

pub(crate) struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    /// Implicit balanced tree: the node of `order[lo..hi]` is `order[(lo + hi) / 2]`.
    order: Vec<usize>,
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(points: &'a [f64], dim: usize) -> Self {
        let m = if dim == 0 { 0 } else { points.len() / dim };
        let mut tree = Self {
            points,
            dim,
            order: (0..m).collect(),
        };
        tree.build(0, m, 0);
        tree
    }

    pub(crate) fn len(&self) -> usize {
        self.order.len()
    }

    pub(crate) fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) {
        if hi - lo <= 1 {
            return;
        }
        let axis = depth % self.dim;
        let mid = (lo + hi) / 2;
        let (pts, dim) = (self.points, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a * dim + axis]
                .total_cmp(&pts[b * dim + axis])
                .then(a.cmp(&b))
        });
        self.build(lo, mid, depth + 1);
        self.build(mid + 1, hi, depth + 1);
    }

    /// Indices within `eps` of `query` (inclusive), ascending.
    #[cfg(test)]
    pub(crate) fn within(&self, query: &[f64], eps: f64, out: &mut Vec<usize>) {
        out.clear();
        self.within_rec(query, eps * eps, 0, self.len(), 0, out);
        out.sort_unstable();
    }

    /// Whether at least `min` points lie within `eps` of `query`.
    pub(crate) fn has_at_least(&self, query: &[f64], eps: f64, min: usize) -> bool {
        let mut found = 0;
        self.count_rec(query, eps * eps, 0, self.len(), 0, min, &mut found);
        found >= min
    }

    #[allow(clippy::too_many_arguments)]
    fn count_rec(&self, q: &[f64], eps2: f64, lo: usize, hi: usize, depth: usize, min: usize, found: &mut usize) {
        if lo >= hi || *found >= min {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.order[mid];
        if sq_dist(q, self.point(node)) <= eps2 {
            *found += 1;
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - self.point(node)[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.count_rec(q, eps2, near.0, near.1, depth + 1, min, found);
        if diff * diff <= eps2 {
            self.count_rec(q, eps2, far.0, far.1, depth + 1, min, found);
        }
    }

    #[cfg(test)]
    fn within_rec(&self, q: &[f64], eps2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.order[mid];
        if sq_dist(q, self.point(node)) <= eps2 {
            out.push(node);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - self.point(node)[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.within_rec(q, eps2, near.0, near.1, depth + 1, out);
        if diff * diff <= eps2 {
            self.within_rec(q, eps2, far.0, far.1, depth + 1, out);
        }
    }

    /// Like [`KdTree::within_unordered`] but only reports points still in `alive`.
    pub(crate) fn within_alive(&self, query: &[f64], eps: f64, alive: &Alive, out: &mut Vec<usize>) {
        out.clear();
        self.alive_rec(query, eps * eps, 0, self.len(), 0, alive, out);
    }

    #[allow(clippy::too_many_arguments)]
    fn alive_rec(&self, q: &[f64], eps2: f64, lo: usize, hi: usize, depth: usize, alive: &Alive, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if alive.subtree[mid] == 0 {
            return;
        }
        let node = self.order[mid];
        if alive.point[mid] && sq_dist(q, self.point(node)) <= eps2 {
            out.push(node);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - self.point(node)[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.alive_rec(q, eps2, near.0, near.1, depth + 1, alive, out);
        if diff * diff <= eps2 {
            self.alive_rec(q, eps2, far.0, far.1, depth + 1, alive, out);
        }
    }

    /// The `k` nearest points to point `i` (excluding `i`), ordered by
    /// `(distance, index)`. Returns `(index, squared distance)` pairs.
    pub(crate) fn knn_of(&self, i: usize, k: usize) -> Vec<(usize, f64)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let q = self.point(i);
        self.knn_rec(q, i, k, 0, self.len(), 0, &mut heap);
        let mut v: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.index, c.d2)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn knn_rec(
        &self,
        q: &[f64],
        skip: usize,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let node = self.order[mid];
        if node != skip {
            let c = Candidate {
                d2: sq_dist(q, self.point(node)),
                index: node,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(c);
            }
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - self.point(node)[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, skip, k, near.0, near.1, depth + 1, heap);
        // Ties matter for the index tie-break, so only prune strictly farther planes.
        if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
            self.knn_rec(q, skip, k, far.0, far.1, depth + 1, heap);
        }
    }
}

/// Removable membership over the points of a [`KdTree`], with per-subtree
/// counts so queries can skip emptied subtrees.
pub(crate) struct Alive {
    /// Indexed by tree position.
    point: Vec<bool>,
    subtree: Vec<usize>,
    position: Vec<usize>,
}

impl Alive {
    pub(crate) fn new(tree: &KdTree) -> Self {
        let n = tree.len();
        let mut subtree = vec![0; n];
        fn fill(subtree: &mut [usize], lo: usize, hi: usize) {
            if lo >= hi {
                return;
            }
            subtree[(lo + hi) / 2] = hi - lo;
            fill(subtree, lo, (lo + hi) / 2);
            fill(subtree, (lo + hi) / 2 + 1, hi);
        }
        fill(&mut subtree, 0, n);
        let mut position = vec![0; n];
        for (pos, &i) in tree.order.iter().enumerate() {
            position[i] = pos;
        }
        Self {
            point: vec![true; n],
            subtree,
            position,
        }
    }

    pub(crate) fn remove(&mut self, i: usize) {
        let p = self.position[i];
        if !self.point[p] {
            return;
        }
        self.point[p] = false;
        let (mut lo, mut hi) = (0, self.point.len());
        loop {
            let mid = (lo + hi) / 2;
            self.subtree[mid] -= 1;
            if mid == p {
                break;
            }
            if p < mid {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_for;
    use rand::Rng;

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = rng_for(3, 0);
        for dim in 1..=3 {
            // Integer coordinates produce many exact distance ties.
            let pts: Vec<f64> = (0..150 * dim).map(|_| rng.random_range(0..6) as f64).collect();
            let tree = KdTree::new(&pts, dim);
            let m = pts.len() / dim;
            let mut got = Vec::new();
            for i in 0..m {
                let p = tree.point(i);
                tree.within(p, 1.5, &mut got);
                let want: Vec<usize> = (0..m).filter(|&j| sq_dist(p, tree.point(j)) <= 2.25).collect();
                assert_eq!(got, want);
                assert!(tree.has_at_least(p, 1.5, want.len()));
                assert!(!tree.has_at_least(p, 1.5, want.len() + 1));

                let mut alive = Alive::new(&tree);
                (0..m).filter(|j| j % 3 == 0).for_each(|j| alive.remove(j));
                tree.within_alive(p, 1.5, &alive, &mut got);
                got.sort_unstable();
                assert_eq!(got, want.iter().copied().filter(|j| j % 3 != 0).collect::<Vec<_>>());

                let knn = tree.knn_of(i, 7);
                let mut all: Vec<(usize, f64)> =
                    (0..m).filter(|&j| j != i).map(|j| (j, sq_dist(p, tree.point(j)))).collect();
                all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                all.truncate(7);
                assert_eq!(knn, all);
            }
        }
    }
}
