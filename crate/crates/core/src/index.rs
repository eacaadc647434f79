//! Exact k-nearest-neighbour search over VLAD descriptors with a ball tree.
//!
//! Construction splits each node on its coordinate of maximum spread at the
//! median (the lower half, median included, goes left). Every node keeps the
//! centroid of its points and the exact maximum distance from that centroid.
//! Queries descend closer-child-first and skip any node whose ball cannot
//! hold a point nearer than the current n-th best.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::util::sq_dist_f64;

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// One ranked result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

impl Neighbor {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Max-heap entry: the worst kept neighbour sits on top.
struct Worst(Neighbor);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
struct Node {
    center: Vec<f64>,
    radius: f64,
    /// Range into `BallTree::order`.
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Counters from one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub visited_nodes: usize,
    pub pruned_nodes: usize,
    pub distance_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct BallTree {
    dim: usize,
    leaf_size: usize,
    points: Vec<Arc<[f32]>>,
    ids: Vec<usize>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn center_distance(p: &[f32], c: &[f64]) -> f64 {
    p.iter()
        .zip(c)
        .map(|(&x, &m)| {
            let d = x as f64 - m;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn point_distance(a: &[f32], b: &[f32]) -> f64 {
    sq_dist_f64(a, b).sqrt()
}

impl BallTree {
    /// Builds a tree over `(id, vector)` pairs.
    pub fn build(points: Vec<(usize, Arc<[f32]>)>, leaf_size: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("ball tree points"));
        }
        if leaf_size == 0 {
            return Err(Error::InvalidParameter("leaf_size must be >= 1".into()));
        }
        let dim = points[0].1.len();
        if let Some((_, bad)) = points.iter().find(|(_, p)| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let (ids, points): (Vec<usize>, Vec<Arc<[f32]>>) = points.into_iter().unzip();
        let mut tree = BallTree {
            dim,
            leaf_size,
            order: (0..points.len()).collect(),
            points,
            ids,
            nodes: Vec::new(),
        };
        tree.build_node(0, tree.points.len());
        debug_assert_eq!(tree.validate(), Ok(()));
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let n = end - start;
        let mut center = vec![0f64; self.dim];
        for &i in &self.order[start..end] {
            for (c, &v) in center.iter_mut().zip(self.points[i].iter()) {
                *c += v as f64;
            }
        }
        center.iter_mut().for_each(|c| *c /= n as f64);
        let radius = self.order[start..end]
            .iter()
            .map(|&i| center_distance(&self.points[i], &center))
            .fold(0f64, f64::max);
        let slot = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: None,
        });
        if n <= self.leaf_size {
            return slot;
        }

        let split_dim = self.max_spread_dim(start, end);
        let (points, ids) = (&self.points, &self.ids);
        self.order[start..end].sort_by(|&a, &b| {
            points[a][split_dim]
                .total_cmp(&points[b][split_dim])
                .then(ids[a].cmp(&ids[b]))
                .then(a.cmp(&b))
        });
        let mid = start + n.div_ceil(2);
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot].children = Some((left, right));
        slot
    }

    fn max_spread_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = vec![f32::INFINITY; self.dim];
        let mut hi = vec![f32::NEG_INFINITY; self.dim];
        for &i in &self.order[start..end] {
            for (d, &v) in self.points[i].iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let mut best = (0, f32::NEG_INFINITY);
        for d in 0..self.dim {
            let spread = hi[d] - lo[d];
            if spread > best.1 {
                best = (d, spread);
            }
        }
        best.0
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Exact `n` nearest neighbours, ascending by distance then id.
    pub fn query_knn(&self, q: &[f32], n: usize) -> Result<Vec<Neighbor>> {
        self.query_knn_with_stats(q, n).map(|(r, _)| r)
    }

    pub fn query_knn_with_stats(&self, q: &[f32], n: usize) -> Result<(Vec<Neighbor>, QueryStats)> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        let n = n.min(self.len());
        let mut heap = BinaryHeap::with_capacity(n + 1);
        let mut stats = QueryStats::default();
        let root_d = center_distance(q, &self.nodes[0].center);
        self.search(0, root_d, q, n, &mut heap, &mut stats);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|w| w.0).collect();
        out.sort_by(Neighbor::rank_cmp);
        Ok((out, stats))
    }

    fn search(
        &self,
        node_idx: usize,
        center_d: f64,
        q: &[f32],
        n: usize,
        heap: &mut BinaryHeap<Worst>,
        stats: &mut QueryStats,
    ) {
        let node = &self.nodes[node_idx];
        if heap.len() == n {
            let bound = (center_d - node.radius).max(0.0);
            // Floating-point slack so rounding never prunes an exact tie.
            let slack = 1e-9 * (1.0 + center_d + node.radius);
            if bound > heap.peek().unwrap().0.distance + slack {
                stats.pruned_nodes += 1;
                return;
            }
        }
        stats.visited_nodes += 1;
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    stats.distance_evaluations += 1;
                    let cand = Neighbor {
                        id: self.ids[i],
                        distance: point_distance(q, &self.points[i]),
                    };
                    if heap.len() < n {
                        heap.push(Worst(cand));
                    } else if cand.rank_cmp(&heap.peek().unwrap().0) == Ordering::Less {
                        heap.pop();
                        heap.push(Worst(cand));
                    }
                }
            }
            Some((l, r)) => {
                let dl = center_distance(q, &self.nodes[l].center);
                let dr = center_distance(q, &self.nodes[r].center);
                let (first, df, second, ds) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
                self.search(first, df, q, n, heap, stats);
                self.search(second, ds, q, n, heap, stats);
            }
        }
    }

    /// Exhaustively checks the structural invariants: every node radius is
    /// the exact maximum distance of its points, leaves hold between 1 and
    /// `leaf_size` points, children partition their parent and every point
    /// sits in exactly one leaf.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0usize; self.points.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            let max = self.order[node.start..node.end]
                .iter()
                .map(|&i| center_distance(&self.points[i], &node.center))
                .fold(0f64, f64::max);
            if max != node.radius {
                return Err(format!("node {idx}: radius {} but max distance {max}", node.radius));
            }
            match node.children {
                None => {
                    let size = node.end - node.start;
                    if size == 0 || size > self.leaf_size {
                        return Err(format!("leaf {idx} holds {size} points"));
                    }
                    for &i in &self.order[node.start..node.end] {
                        seen[i] += 1;
                    }
                }
                Some((l, r)) => {
                    let (a, b) = (&self.nodes[l], &self.nodes[r]);
                    if a.start != node.start || a.end != b.start || b.end != node.end {
                        return Err(format!("children of node {idx} do not partition it"));
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(format!("point {i} appears in {} leaves", seen[i]));
        }
        Ok(())
    }
}

/// Exhaustive scan with the same ordering as [`BallTree::query_knn`].
pub fn brute_force_knn(points: &[(usize, Arc<[f32]>)], q: &[f32], n: usize) -> Result<Vec<Neighbor>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut all = Vec::with_capacity(points.len());
    for (id, p) in points {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: p.len(),
            });
        }
        all.push(Neighbor {
            id: *id,
            distance: point_distance(q, p),
        });
    }
    all.sort_by(Neighbor::rank_cmp);
    all.truncate(n);
    Ok(all)
}
