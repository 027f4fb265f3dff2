//! Static kd-tree used for nearest-predecessor queries.
//!
//! The tree stores point indices only; coordinates are borrowed from the
//! caller. Queries return the k nearest points by squared Euclidean
//! distance, ties broken by the smaller index, restricted to indices below
//! a caller-supplied bound.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    nodes: Vec<Node>,
    root: Option<usize>,
    dim: usize,
}

impl<'a> KdTree<'a> {
    /// Builds a tree over `points[indices]`.
    pub fn build(points: &'a [[f64; 3]], indices: &[usize], dim: usize) -> Self {
        let mut tree = KdTree {
            points,
            nodes: Vec::with_capacity(indices.len()),
            root: None,
            dim,
        };
        let mut idx = indices.to_vec();
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dim;
        let mid = idx.len() / 2;
        let pts = self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let point = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(Node {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(&mut hi[1..], depth + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    /// The `k` nearest stored points to `query` among indices `< bound`,
    /// sorted by increasing (distance, index).
    pub fn nearest_below(&self, query: &[f64; 3], k: usize, bound: usize) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            if let Some(root) = self.root {
                self.search(root, query, k, bound, &mut heap);
            }
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.d2, c.idx)).collect()
    }

    fn search(
        &self,
        node: usize,
        query: &[f64; 3],
        k: usize,
        bound: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let n = &self.nodes[node];
        if n.point < bound {
            let c = Candidate {
                d2: dist2(&self.points[n.point], query),
                idx: n.point,
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        }
        let diff = query[n.axis] - self.points[n.point][n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(c) = near {
            self.search(c, query, k, bound, heap);
        }
        if let Some(c) = far {
            // Points exactly on the worst radius may still win on index.
            if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                self.search(c, query, k, bound, heap);
            }
        }
    }
}
