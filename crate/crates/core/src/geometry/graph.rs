use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Directed neighbor lists in compressed form: node `i` receives messages
/// from `targets[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    /// Number of nodes whose lists are stored (queries, for bipartite graphs).
    pub n: usize,
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Outcome of [`augment_edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentReport {
    pub requested: usize,
    pub added: usize,
}

impl Graph {
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for l in &lists {
            targets.extend_from_slice(l);
            offsets.push(targets.len());
        }
        Graph {
            n: lists.len(),
            offsets,
            targets,
        }
    }

    /// Builds from directed `(source, target)` pairs over `n` nodes; lists are sorted.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists = vec![Vec::new(); n];
        for &(s, t) in edges {
            if s >= n || t >= n {
                return Err(Error::Input(format!("edge ({s}, {t}) outside {n} nodes")));
            }
            lists[s].push(t);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Graph::from_lists(lists))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn lists(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|i| self.neighbors(i).to_vec()).collect()
    }

    /// Checks `targets < n_sources` and monotone offsets.
    pub fn validate(&self, n_sources: usize) -> Result<()> {
        if self.offsets.len() != self.n + 1 || self.offsets[0] != 0 {
            return Err(Error::Input("graph offsets malformed".into()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) || *self.offsets.last().unwrap() != self.targets.len() {
            return Err(Error::Input("graph offsets not monotone".into()));
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= n_sources) {
            return Err(Error::Input(format!("graph target {t} >= {n_sources}")));
        }
        Ok(())
    }

    /// Adds `i` to its own list where missing.
    pub fn with_self_loops(&self) -> Graph {
        let lists = (0..self.n)
            .map(|i| {
                let mut l = self.neighbors(i).to_vec();
                if let Err(pos) = l.binary_search(&i) {
                    l.insert(pos, i);
                }
                l
            })
            .collect();
        Graph::from_lists(lists)
    }

    /// Flattened `(receiver, sender)` pairs.
    pub fn edge_pairs(&self) -> (Vec<usize>, Vec<usize>) {
        let mut recv = Vec::with_capacity(self.targets.len());
        for i in 0..self.n {
            recv.extend(std::iter::repeat_n(i, self.offsets[i + 1] - self.offsets[i]));
        }
        (recv, self.targets.clone())
    }

    /// Relabels nodes: new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Graph {
        let mut inv = vec![0; order.len()];
        for (k, &o) in order.iter().enumerate() {
            inv[o] = k;
        }
        let lists = order
            .iter()
            .map(|&o| {
                let mut l: Vec<usize> = self.neighbors(o).iter().map(|&t| inv[t]).collect();
                l.sort_unstable();
                l
            })
            .collect();
        Graph::from_lists(lists)
    }

    fn undirected(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n];
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if i != j && j < self.n {
                    adj[i].insert(j);
                    adj[j].insert(i);
                }
            }
        }
        adj
    }

    /// Number of connected components, edges taken as undirected.
    pub fn components(&self) -> usize {
        let adj = self.undirected();
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut q = VecDeque::from([s]);
            seen[s] = true;
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        q.push_back(v);
                    }
                }
            }
        }
        count
    }

    /// Longest shortest-path length (undirected BFS); `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let adj = self.undirected();
        let mut best = 0;
        for s in 0..self.n {
            let mut dist = vec![usize::MAX; self.n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            let far = *dist.iter().max()?;
            if far == usize::MAX {
                return None;
            }
            best = best.max(far);
        }
        Some(best)
    }
}

/// Adds up to `extra` undirected edges between node pairs that are not
/// adjacent in either direction, sampled uniformly with `seed`.
pub fn augment_edges(graph: &Graph, extra: usize, seed: u64) -> (Graph, AugmentReport) {
    let n = graph.n;
    let mut adj = graph.undirected();
    let existing: usize = adj.iter().map(|s| s.len()).sum::<usize>() / 2;
    let available = (n * n.saturating_sub(1) / 2).saturating_sub(existing);
    let target = extra.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added: Vec<(usize, usize)> = Vec::with_capacity(target);
    if target > 0 && target * 2 >= available {
        let mut pool = Vec::with_capacity(available);
        for i in 0..n {
            for j in i + 1..n {
                if !adj[i].contains(&j) {
                    pool.push((i, j));
                }
            }
        }
        for k in 0..target {
            let pick = rng.random_range(k..pool.len());
            pool.swap(k, pick);
            added.push(pool[k]);
        }
    } else {
        while added.len() < target {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let (a, b) = (i.min(j), i.max(j));
            if adj[a].contains(&b) {
                continue;
            }
            adj[a].insert(b);
            adj[b].insert(a);
            added.push((a, b));
        }
    }
    let mut lists = graph.lists();
    for &(a, b) in &added {
        lists[a].push(b);
        lists[b].push(a);
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    (
        Graph::from_lists(lists),
        AugmentReport {
            requested: extra,
            added: added.len(),
        },
    )
}
