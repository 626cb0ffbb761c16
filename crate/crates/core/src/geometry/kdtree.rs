//! Exact nearest-neighbor index (static k-d tree).
//!
//! Distances are computed with the same expression as a linear scan, so
//! query results match brute force bit for bit. Ties resolve to the lowest
//! point index.

use super::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    /// Permutation of point indices; each subtree owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
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

#[inline]
fn distance(a: &Point3, b: &Point3) -> f64 {
    (a - b).norm()
}

impl SpatialIndex {
    pub fn new(points: &[Point3]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
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

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] <= 0.0 {
            // every point coincides
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest point to `q` as `(index, distance)`; `None` when empty.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(0, q, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, node: usize, q: &Point3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = distance(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
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
                self.nearest_rec(near, q, best);
                if diff.abs() <= best.1 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return heap;
        }
        self.knn_rec(0, q, k, &mut heap);
        heap
    }

    fn knn_rec(&self, node: usize, q: &Point3, k: usize, found: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = distance(q, &self.points[i]);
                    let worse = |e: &(usize, f64)| d < e.1 || (d == e.1 && i < e.0);
                    if found.len() < k || found.last().map(worse).unwrap_or(true) {
                        let pos = found.partition_point(|e| !(d < e.1 || (d == e.1 && i < e.0)));
                        found.insert(pos, (i, d));
                        found.truncate(k);
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
                self.knn_rec(near, q, k, found);
                let bound = if found.len() < k {
                    f64::INFINITY
                } else {
                    found[k - 1].1
                };
                if diff.abs() <= bound {
                    self.knn_rec(far, q, k, found);
                }
            }
        }
    }
}
