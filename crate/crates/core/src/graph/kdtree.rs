//! Exact kd-tree over the rows of a point cloud.
//!
//! Pruning only discards a subtree when the squared distance to the
//! splitting plane already fails the query predicate, so results equal a
//! brute-force scan bit for bit (same distance arithmetic, same ties).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::pointcloud::PointCloud;

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance, summed in coordinate order.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Candidate ordered by `(squared distance, index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut tree = Self {
            cloud,
            order: (0..cloud.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, cloud.len());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.cloud.ambient_dim();
        let axis = (0..dim)
            .map(|a| {
                let (lo, hi) = self.order[start..end].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &i| {
                        let v = self.cloud.point(i)[a];
                        (lo.min(v), hi.max(v))
                    },
                );
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(a, _)| a)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let cloud = self.cloud;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            cloud.point(i)[axis].total_cmp(&cloud.point(j)[axis])
        });
        let value = cloud.point(self.order[mid])[axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Indices `j != query` with `dist2 < radius2`, ascending.
    pub fn within(&self, query: usize, radius2: f64) -> Vec<usize> {
        let q = self.cloud.point(query);
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &j in &self.order[start..end] {
                        if j != query && dist2(q, self.cloud.point(j)) < radius2 {
                            out.push(j);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[axis] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    if diff * diff < radius2 {
                        stack.push(far);
                    }
                    stack.push(near);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `query` (excluding itself), ordered by
    /// `(distance, index)`.
    pub fn nearest(&self, query: usize, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let q = self.cloud.point(query);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.nearest_node(0, query, q, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort();
        found.into_iter().map(|c| c.index).collect()
    }

    fn nearest_node(&self, id: usize, query: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == query {
                        continue;
                    }
                    let cand = Candidate {
                        d2: dist2(q, self.cloud.point(j)),
                        index: j,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_node(near, query, q, k, heap);
                // equal distances may still win on index
                let visit_far = heap.len() < k || heap.peek().is_some_and(|w| diff * diff <= w.d2);
                if visit_far {
                    self.nearest_node(far, query, q, k, heap);
                }
            }
        }
    }
}
