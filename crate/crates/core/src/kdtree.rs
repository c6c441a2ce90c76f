//! Exact k-d tree over an immutable 3D point set.
//!
//! Nodes split at the median of the widest bounding-box axis until a leaf holds
//! at most `leaf_size` points. Queries are exact: results match a linear scan
//! bit-for-bit, with equal distances ordered by the smaller original index.

use crate::geometry::{bounding_box, dist2, Point3};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KdTreeError {
    #[error("cannot build a tree over zero points")]
    Empty,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("k = {k} exceeds the {n} indexed points")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// A query hit: original point index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    /// Original indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

/// Candidate ordered by (squared distance, index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Result<Self, KdTreeError> {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[Point3], leaf_size: usize) -> Result<Self, KdTreeError> {
        if points.is_empty() {
            return Err(KdTreeError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(KdTreeError::NonFinite(i));
        }
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
            leaf_size: leaf_size.max(1),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice: Vec<Point3> = self.order[start..end]
            .iter()
            .map(|&i| self.points[i])
            .collect();
        let (lo, hi) = bounding_box(&slice).unwrap();
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap();
        if hi[axis] == lo[axis] {
            // All points coincide; no split can separate them.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[start + mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// The closest point to `q`.
    pub fn nearest(&self, q: Point3) -> Neighbor {
        let mut best = Candidate {
            d2: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_in(0, q, &mut best);
        Neighbor {
            index: best.index,
            distance: best.d2.sqrt(),
        }
    }

    fn nearest_in(&self, node: usize, q: Point3, best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let c = Candidate {
                        d2: dist2(q, self.points[index]),
                        index,
                    };
                    if c < *best {
                        *best = c;
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
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_in(near, q, best);
                // `<=` keeps equal-distance points reachable for the index tie-break.
                if diff * diff <= best.d2 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points in ascending (distance, index) order.
    pub fn k_nearest(&self, q: Point3, k: usize) -> Result<Vec<Neighbor>, KdTreeError> {
        if k == 0 {
            return Err(KdTreeError::ZeroK);
        }
        if k > self.len() {
            return Err(KdTreeError::KTooLarge { k, n: self.len() });
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.k_nearest_in(0, q, k, &mut heap);
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    fn k_nearest_in(&self, node: usize, q: Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let c = Candidate {
                        d2: dist2(q, self.points[index]),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
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
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.k_nearest_in(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.k_nearest_in(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_tree() {
        let t = KdTree::build(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(t.len(), 1);
        let n = t.nearest([1.0, 2.0, 4.0]);
        assert_eq!((n.index, n.distance), (0, 1.0));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(KdTree::build(&[]).unwrap_err(), KdTreeError::Empty);
        assert_eq!(
            KdTree::build(&[[f64::NAN, 0.0, 0.0]]).unwrap_err(),
            KdTreeError::NonFinite(0)
        );
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let pts = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let t = KdTree::with_leaf_size(&pts, 1).unwrap();
        assert_eq!(t.nearest([0.0; 3]).index, 0);
        assert_eq!(t.nearest([1.0, 0.0, 0.0]).index, 0);
        let all = t.k_nearest([0.9, 0.0, 0.0], 3).unwrap();
        assert_eq!(
            all.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 2, 1]
        );
    }

    #[test]
    fn duplicates_are_all_returned() {
        let pts = vec![[0.5, 0.5, 0.5]; 40];
        let t = KdTree::with_leaf_size(&pts, 4).unwrap();
        let all = t.k_nearest([0.0; 3], 40).unwrap();
        assert_eq!(
            all.iter().map(|n| n.index).collect::<Vec<_>>(),
            (0..40).collect::<Vec<_>>()
        );
    }

    #[test]
    fn k_bounds() {
        let t = KdTree::build(&[[0.0; 3], [1.0; 3]]).unwrap();
        assert_eq!(
            t.k_nearest([0.0; 3], 3).unwrap_err(),
            KdTreeError::KTooLarge { k: 3, n: 2 }
        );
        assert_eq!(t.k_nearest([0.0; 3], 0).unwrap_err(), KdTreeError::ZeroK);
        let one = t.k_nearest([0.9; 3], 1).unwrap();
        assert_eq!(one[0], t.nearest([0.9; 3]));
    }
}
