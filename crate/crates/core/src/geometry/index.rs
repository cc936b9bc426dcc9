use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point3;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Exact kd-tree over a fixed point set.
///
/// Ties in distance are broken by the lower point index so results do not
/// depend on tree layout.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(PartialEq)]
struct HeapItem {
    d2: f64,
    index: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("spatial index needs at least one point"));
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        let n = points.len();
        index.build_node(0, n);
        Ok(index)
    }

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id as usize] = Node::Split {
            axis: axis as u8,
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

    /// Closest indexed point.
    pub fn nearest(&self, query: &Point3) -> Neighbor {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(0, query, &mut best);
        Neighbor {
            index: best.1 as usize,
            distance: best.0.sqrt(),
        }
    }

    fn nearest_rec(&self, node: u32, q: &Point3, best: &mut (f64, u32)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d2 = (self.points[i as usize] - q).norm_squared();
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points sorted by distance, then index.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|h| Neighbor {
                index: h.index as usize,
                distance: h.d2.sqrt(),
            })
            .collect();
        out.truncate(k);
        out
    }

    fn knn_rec(&self, node: u32, q: &Point3, k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let item = HeapItem {
                        d2: (self.points[i as usize] - q).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// All points with distance `<= r`, sorted by distance, then index.
    pub fn radius_search(&self, query: &Point3, r: f64) -> Vec<Neighbor> {
        let mut found = Vec::new();
        self.within(query, r, &mut found);
        found.sort_by(|a: &(f64, u32), b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found
            .into_iter()
            .map(|(d2, i)| Neighbor {
                index: i as usize,
                distance: d2.sqrt(),
            })
            .collect()
    }

    /// Unsorted `(squared distance, index)` pairs within `r`.
    pub fn within(&self, query: &Point3, r: f64, out: &mut Vec<(f64, u32)>) {
        if r < 0.0 {
            return;
        }
        self.within_rec(0, query, r * r, out);
    }

    fn within_rec(&self, node: u32, q: &Point3, r2: f64, out: &mut Vec<(f64, u32)>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d2 = (self.points[i as usize] - q).norm_squared();
                    if d2 <= r2 {
                        out.push((d2, i));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, out);
                }
            }
        }
    }

    /// Number of points within `r`, without materializing them.
    pub fn count_within(&self, query: &Point3, r: f64) -> usize {
        let mut out = Vec::new();
        self.within(query, r, &mut out);
        out.len()
    }
}
