//! Static 3-D KD-tree used for radius and k-nearest queries.
//!
//! Distances are compared as squared Euclidean norms computed in a fixed
//! order, so results are identical to a brute-force scan using
//! [`dist2`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF: usize = 8;

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let pts = self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
            });
            let l = self.build(start, mid);
            let r = self.build(mid, end);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn box_dist2(node: &Node, q: &[f64; 3]) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if q[a] < node.lo[a] {
                node.lo[a] - q[a]
            } else if q[a] > node.hi[a] {
                q[a] - node.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Indices of all points with `dist2 <= r2`, ascending.
    pub fn within(&self, q: &[f64; 3], r2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if Self::box_dist2(node, q) > r2 {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if dist2(&self.points[i], q) <= r2 {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `q` other than `skip`, ordered by
    /// (distance, index).
    pub fn nearest(&self, q: &[f64; 3], k: usize, skip: Option<usize>) -> Vec<usize> {
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        self.nearest_rec(0, q, k, skip, &mut heap);
        let mut v = heap.into_vec();
        v.sort();
        v.into_iter().map(|c| c.1).collect()
    }

    fn nearest_rec(&self, n: usize, q: &[f64; 3], k: usize, skip: Option<usize>, heap: &mut BinaryHeap<Cand>) {
        let node = &self.nodes[n];
        if heap.len() == k {
            let worst = heap.peek().map(|c| c.0).unwrap_or(f64::INFINITY);
            // equal distance may still hold a lower index
            if Self::box_dist2(node, q) > worst {
                return;
            }
        }
        match node.children {
            Some((l, r)) => {
                let (dl, dr) = (Self::box_dist2(&self.nodes[l], q), Self::box_dist2(&self.nodes[r], q));
                let (a, b) = if dl <= dr { (l, r) } else { (r, l) };
                self.nearest_rec(a, q, k, skip, heap);
                self.nearest_rec(b, q, k, skip, heap);
            }
            None => {
                for &i in &self.order[node.start..node.end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let c = Cand(dist2(&self.points[i], q), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if let Some(top) = heap.peek() {
                        if c < *top {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
            }
        }
    }
}
