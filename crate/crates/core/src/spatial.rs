//! Exact nearest-neighbour queries over 3-D points.
//!
//! A static kd-tree split on the widest axis at the median. All queries are
//! exact; distance ties resolve to the lowest original point index, so results
//! never depend on tree shape.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    /// original index of `points[i]`
    index: Vec<usize>,
    nodes: Vec<Node<T>>,
}

/// A neighbour found by a query: original point index and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist2: T,
}

impl<T: Real> Neighbor<T> {
    fn before(&self, other: &Self) -> bool {
        self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.index < other.index)
    }
}

struct HeapItem<T>(Neighbor<T>);

impl<T: Real> PartialEq for HeapItem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for HeapItem<T> {}
impl<T: Real> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapItem<T> {
    // max-heap on (dist2, index): the worst kept neighbour is on top
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .dist2
            .partial_cmp(&other.0.dist2)
            .unwrap_or(Ordering::Equal)
            .then(self.0.index.cmp(&other.0.index))
    }
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Point3<T>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, &mut nodes);
        }
        Self {
            points: order.iter().map(|&i| points[i]).collect(),
            index: order,
            nodes,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, q: &Point3<T>) -> Option<Neighbor<T>> {
        if self.is_empty() {
            return None;
        }
        let mut best = Neighbor { index: usize::MAX, dist2: T::max_value().expect("bounded") };
        self.nearest_in(0, q, &mut best);
        Some(best)
    }

    /// Nearest point with squared distance at most `radius^2`, if any.
    pub fn nearest_within(&self, q: &Point3<T>, radius: T) -> Option<Neighbor<T>> {
        if self.is_empty() {
            return None;
        }
        let mut best = Neighbor { index: usize::MAX, dist2: radius * radius };
        self.nearest_in(0, q, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn nearest_in(&self, node: usize, q: &Point3<T>, best: &mut Neighbor<T>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in start..end {
                    let cand = Neighbor { index: self.index[p], dist2: (self.points[p] - q).norm_squared() };
                    if cand.before(best) {
                        *best = cand;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if diff * diff <= best.dist2 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points ordered by (distance, index).
    pub fn knn(&self, q: &Point3<T>, k: usize) -> Vec<Neighbor<T>> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapItem<T>> = BinaryHeap::with_capacity(k + 1);
        self.knn_in(0, q, k, &mut heap);
        let mut out: Vec<Neighbor<T>> = heap.into_iter().map(|h| h.0).collect();
        out.sort_by_key(|a| HeapItem(*a));
        out
    }

    fn knn_in(&self, node: usize, q: &Point3<T>, k: usize, heap: &mut BinaryHeap<HeapItem<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in start..end {
                    let cand = Neighbor { index: self.index[p], dist2: (self.points[p] - q).norm_squared() };
                    if heap.len() < k {
                        heap.push(HeapItem(cand));
                    } else if cand.before(&heap.peek().expect("non-empty").0) {
                        heap.pop();
                        heap.push(HeapItem(cand));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.knn_in(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").0.dist2 {
                    self.knn_in(far, q, k, heap);
                }
            }
        }
    }

    /// All points with distance `<= radius`, ordered by (distance, index).
    pub fn within_radius(&self, q: &Point3<T>, radius: T) -> Vec<Neighbor<T>> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.radius_in(0, q, radius * radius, &mut out);
        }
        out.sort_by_key(|a| HeapItem(*a));
        out
    }

    fn radius_in(&self, node: usize, q: &Point3<T>, r2: T, out: &mut Vec<Neighbor<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in start..end {
                    let dist2 = (self.points[p] - q).norm_squared();
                    if dist2 <= r2 {
                        out.push(Neighbor { index: self.index[p], dist2 });
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.radius_in(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_in(far, q, r2, out);
                }
            }
        }
    }
}

fn build<T: Real>(points: &[Point3<T>], order: &mut [usize], offset: usize, nodes: &mut Vec<Node<T>>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset, end: offset + order.len() });
        return id;
    }
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    if ext[axis] == T::zero() {
        // all points coincide
        nodes.push(Node::Leaf { start: offset, end: offset + order.len() });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].partial_cmp(&points[b][axis]).unwrap_or(Ordering::Equal)
    });
    let value = points[order[mid]][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}
