//! Leiden community detection maximising modularity.
//!
//! Each level runs fast local moving, refines every community into
//! well-connected sub-communities, and aggregates the refined partition into
//! a smaller graph whose initial partition is the unrefined one. Levels repeat
//! until local moving leaves every node on its own, and the whole procedure is
//! restarted from its own output until the partition stops changing.
//!
//! Quality increments are measured in raw edge-weight units, the convention
//! of the reference implementations, so `randomness` is on that scale too.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{modularity, Partition, ProximityGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leiden {
    /// Modularity resolution `gamma`.
    pub resolution: f64,
    /// Temperature of the randomised refinement merge. Zero means greedy.
    pub randomness: f64,
    /// Cap on restarts from the previous result.
    pub max_iterations: usize,
}

impl Default for Leiden {
    fn default() -> Self {
        Leiden {
            resolution: 1.0,
            randomness: 0.01,
            max_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeidenOutcome {
    pub partition: Partition,
    /// Modularity after every local-moving phase, then the final value.
    pub quality_trace: Vec<f64>,
    pub iterations: usize,
}

/// Leiden with default parameters.
pub fn leiden_partition<R: Rng + ?Sized>(g: &ProximityGraph, rng: &mut R) -> Result<Partition> {
    Ok(Leiden::default().run(g, rng)?.partition)
}

impl Leiden {
    pub fn run<R: Rng + ?Sized>(&self, g: &ProximityGraph, rng: &mut R) -> Result<LeidenOutcome> {
        if g.is_degenerate() {
            return Err(Error::DegenerateGraph);
        }
        let base = WorkGraph::from_proximity(g);
        let two_m = 2.0 * g.total_weight();
        let mut labels: Vec<usize> = (0..base.n()).collect();
        let mut trace = Vec::new();
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let next = self.run_levels(&base, &labels, two_m, rng, &mut trace);
            let unchanged = Partition::from_labels(&next) == Partition::from_labels(&labels);
            labels = next;
            if unchanged {
                break;
            }
        }
        let partition = split_disconnected(g, &Partition::from_labels(&labels));
        trace.push(modularity(g, &partition)?);
        Ok(LeidenOutcome {
            partition,
            quality_trace: trace,
            iterations,
        })
    }

    fn run_levels<R: Rng + ?Sized>(
        &self,
        base: &WorkGraph,
        init: &[usize],
        two_m: f64,
        rng: &mut R,
        trace: &mut Vec<f64>,
    ) -> Vec<usize> {
        let mut graph = base.clone();
        let mut node_of: Vec<usize> = (0..base.n()).collect();
        let mut comm = init.to_vec();
        loop {
            self.move_nodes(&graph, &mut comm, two_m, rng);
            let n_comm = relabel(&mut comm);
            trace.push(graph.quality(&comm, n_comm, two_m, self.resolution));
            if n_comm == graph.n() {
                break;
            }
            let mut refined = self.refine(&graph, &comm, n_comm, two_m, rng);
            let n_refined = relabel(&mut refined);
            if n_refined == graph.n() {
                break;
            }
            let mut next_comm = vec![0; n_refined];
            for (v, &r) in refined.iter().enumerate() {
                next_comm[r] = comm[v];
            }
            for x in node_of.iter_mut() {
                *x = refined[*x];
            }
            graph = graph.aggregate(&refined, n_refined);
            comm = next_comm;
        }
        node_of.into_iter().map(|x| comm[x]).collect()
    }

    /// Queue-based local moving: a node is revisited only when one of its
    /// neighbours changes community.
    fn move_nodes<R: Rng + ?Sized>(&self, g: &WorkGraph, comm: &mut [usize], two_m: f64, rng: &mut R) {
        let n = g.n();
        let gamma = self.resolution;
        let eps = 1e-12 * two_m;
        let mut strength = vec![0.0; n];
        let mut size = vec![0usize; n];
        for v in 0..n {
            strength[comm[v]] += g.node_weight[v];
            size[comm[v]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut queue: VecDeque<usize> = order.into();
        let mut queued = vec![true; n];
        let mut link = vec![0.0; n];
        let mut touched = Vec::new();
        let mut seen = vec![false; n];

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let cur = comm[v];
            let kv = g.node_weight[v];
            for &(u, w) in &g.adj[v] {
                let c = comm[u];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            strength[cur] -= kv;
            size[cur] -= 1;

            let mut best = cur;
            let mut best_gain = link[cur] - gamma * kv * strength[cur] / two_m;
            for &c in &touched {
                if c == cur {
                    continue;
                }
                let gain = link[c] - gamma * kv * strength[c] / two_m;
                if gain > best_gain + eps {
                    best = c;
                    best_gain = gain;
                }
            }
            if size[cur] > 0 && 0.0 > best_gain + eps {
                best = empty.pop().expect("an empty community exists while cur is shared");
            }
            if best != cur && size[cur] == 0 {
                empty.push(cur);
            }
            strength[best] += kv;
            size[best] += 1;
            if best != cur {
                comm[v] = best;
                for &(u, _) in &g.adj[v] {
                    if comm[u] != best && !queued[u] {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            }
            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
    }

    /// Splits each community into well-connected sub-communities by merging
    /// singletons, starting from all-singletons.
    fn refine<R: Rng + ?Sized>(
        &self,
        g: &WorkGraph,
        comm: &[usize],
        n_comm: usize,
        two_m: f64,
        rng: &mut R,
    ) -> Vec<usize> {
        let n = g.n();
        let gamma = self.resolution;
        let mut refined: Vec<usize> = (0..n).collect();
        let mut r_strength = g.node_weight.clone();
        let mut r_size = vec![1usize; n];

        let mut comm_strength = vec![0.0; n_comm];
        for v in 0..n {
            comm_strength[comm[v]] += g.node_weight[v];
        }
        // weight from each node to the rest of its own community
        let inner: Vec<f64> = (0..n)
            .map(|v| {
                g.adj[v]
                    .iter()
                    .filter(|&&(u, _)| comm[u] == comm[v])
                    .map(|&(_, w)| w)
                    .sum()
            })
            .collect();
        let mut r_external = inner.clone();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut link = vec![0.0; n];
        let mut touched = Vec::new();
        let mut seen = vec![false; n];
        let mut candidates: Vec<(usize, f64)> = Vec::new();

        for v in order {
            let own = refined[v];
            if r_size[own] != 1 {
                continue;
            }
            let c = comm[v];
            let kv = g.node_weight[v];
            let total_c = comm_strength[c];
            if inner[v] < gamma * kv * (total_c - kv) / two_m {
                continue;
            }
            for &(u, w) in &g.adj[v] {
                if comm[u] != c {
                    continue;
                }
                let r = refined[u];
                if !seen[r] {
                    seen[r] = true;
                    touched.push(r);
                }
                link[r] += w;
            }
            candidates.clear();
            candidates.push((own, 0.0));
            for &r in &touched {
                if r == own {
                    continue;
                }
                let well_connected = r_external[r] >= gamma * r_strength[r] * (total_c - r_strength[r]) / two_m;
                if !well_connected {
                    continue;
                }
                let gain = link[r] - gamma * kv * r_strength[r] / two_m;
                if gain >= 0.0 {
                    candidates.push((r, gain));
                }
            }
            let chosen = self.pick(&candidates, rng);
            if chosen != own {
                refined[v] = chosen;
                r_external[chosen] += inner[v] - 2.0 * link[chosen];
                r_strength[chosen] += kv;
                r_size[chosen] += 1;
                r_strength[own] = 0.0;
                r_size[own] = 0;
            }
            for &r in &touched {
                link[r] = 0.0;
                seen[r] = false;
            }
            touched.clear();
        }
        refined
    }

    /// Draws a candidate with probability proportional to `exp(gain / theta)`.
    fn pick<R: Rng + ?Sized>(&self, candidates: &[(usize, f64)], rng: &mut R) -> usize {
        let (best, max_gain) = candidates
            .iter()
            .copied()
            .fold((candidates[0].0, f64::NEG_INFINITY), |acc, (r, g)| if g > acc.1 { (r, g) } else { acc });
        if self.randomness <= 0.0 || candidates.len() == 1 {
            return best;
        }
        let weights: Vec<f64> = candidates
            .iter()
            .map(|&(_, g)| ((g - max_gain) / self.randomness).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut x = rng.random::<f64>() * total;
        for (&(r, _), w) in candidates.iter().zip(&weights) {
            if x < *w {
                return r;
            }
            x -= w;
        }
        best
    }
}

/// Relabels densely in order of first appearance; returns the label count.
fn relabel(labels: &mut [usize]) -> usize {
    let p = Partition::from_labels(labels);
    labels.copy_from_slice(p.community_of());
    p.community_count()
}

/// Splits every community into its connected components over positive-weight
/// edges. Splitting a community along a cut with no edges never lowers
/// modularity.
fn split_disconnected(g: &ProximityGraph, p: &Partition) -> Partition {
    let n = g.vertex_count();
    let adj = g.adjacency();
    let comm = p.community_of();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &(u, w) in &adj[v] {
                if w > 0.0 && label[u] == usize::MAX && comm[u] == comm[v] {
                    label[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    Partition::from_labels(&label)
}

#[derive(Debug, Clone)]
struct WorkGraph {
    /// Neighbours without self-loops; each undirected edge appears twice.
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    node_weight: Vec<f64>,
}

impl WorkGraph {
    fn from_proximity(g: &ProximityGraph) -> Self {
        WorkGraph {
            adj: g.adjacency(),
            self_loop: vec![0.0; g.vertex_count()],
            node_weight: g.degree().to_vec(),
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn aggregate(&self, labels: &[usize], count: usize) -> WorkGraph {
        let mut self_loop = vec![0.0; count];
        let mut node_weight = vec![0.0; count];
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        for v in 0..self.n() {
            let a = labels[v];
            self_loop[a] += self.self_loop[v];
            node_weight[a] += self.node_weight[v];
            for &(u, w) in &self.adj[v] {
                let b = labels[u];
                if a == b {
                    self_loop[a] += 0.5 * w;
                } else {
                    lists[a].push((b, w));
                }
            }
        }
        let adj = lists
            .into_iter()
            .map(|mut l| {
                l.sort_unstable_by_key(|&(b, _)| b);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(l.len());
                for (b, w) in l {
                    match merged.last_mut() {
                        Some(last) if last.0 == b => last.1 += w,
                        _ => merged.push((b, w)),
                    }
                }
                merged
            })
            .collect();
        WorkGraph {
            adj,
            self_loop,
            node_weight,
        }
    }

    fn quality(&self, comm: &[usize], n_comm: usize, two_m: f64, gamma: f64) -> f64 {
        let mut internal = vec![0.0; n_comm];
        let mut strength = vec![0.0; n_comm];
        for v in 0..self.n() {
            let c = comm[v];
            internal[c] += self.self_loop[v];
            strength[c] += self.node_weight[v];
            for &(u, w) in &self.adj[v] {
                if comm[u] == c {
                    internal[c] += 0.5 * w;
                }
            }
        }
        internal
            .iter()
            .zip(&strength)
            .map(|(&i, &k)| 2.0 * i / two_m - gamma * (k / two_m) * (k / two_m))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage_graph::Edge;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> ProximityGraph {
        ProximityGraph::from_edges(n, edges.iter().map(|&(u, v, weight)| Edge { u, v, weight }).collect()).unwrap()
    }

    fn ring_of_cliques(cliques: usize, size: usize) -> ProximityGraph {
        let mut edges = Vec::new();
        for c in 0..cliques {
            let base = c * size;
            for a in 0..size {
                for b in a + 1..size {
                    edges.push((base + a, base + b, 1.0));
                }
            }
            edges.push((base + size - 1, ((c + 1) % cliques) * size, 1.0));
        }
        graph(cliques * size, &edges)
    }

    fn is_connected_within(g: &ProximityGraph, members: &[usize]) -> bool {
        let adj = g.adjacency();
        let mut seen = vec![members[0]];
        let mut stack = vec![members[0]];
        while let Some(v) = stack.pop() {
            for &(u, w) in &adj[v] {
                if w > 0.0 && members.contains(&u) && !seen.contains(&u) {
                    seen.push(u);
                    stack.push(u);
                }
            }
        }
        seen.len() == members.len()
    }

    #[test]
    fn two_triangles() {
        let g = graph(6, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)]);
        let p = leiden_partition(&g, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.community_count(), 2);
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ring_of_four_k4() {
        let g = ring_of_cliques(4, 4);
        for seed in 0..10 {
            let p = leiden_partition(&g, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(p.community_count(), 4, "seed {seed}");
            for c in 0..4 {
                let labels = &p.community_of()[c * 4..c * 4 + 4];
                assert!(labels.iter().all(|&l| l == labels[0]));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let g = ring_of_cliques(6, 5);
        let a = Leiden::default().run(&g, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = Leiden::default().run(&g, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quality_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let mut edges = Vec::new();
            for u in 0..40 {
                for v in u + 1..40 {
                    if rng.random_bool(0.1) {
                        edges.push((u, v, rng.random_range(0.0..3.0)));
                    }
                }
            }
            let g = graph(40, &edges);
            if g.is_degenerate() {
                continue;
            }
            let out = Leiden::default().run(&g, &mut rng).unwrap();
            for w in out.quality_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{:?}", out.quality_trace);
            }
            let q = modularity(&g, &out.partition).unwrap();
            assert!((q - out.quality_trace.last().unwrap()).abs() < 1e-12);
            let singletons = modularity(&g, &Partition::singletons(40)).unwrap();
            assert!(q >= singletons - 1e-12 && q >= -1e-12);
            for members in out.partition.members() {
                assert!(is_connected_within(&g, &members));
            }
        }
    }

    #[test]
    fn degenerate_graph_errors() {
        let g = graph(3, &[(0, 1, 0.0)]);
        assert!(matches!(leiden_partition(&g, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::DegenerateGraph)));
    }

    #[test]
    fn isolated_vertices_stay_alone() {
        let g = graph(5, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let p = leiden_partition(&g, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = p.community_of();
        assert_ne!(c[3], c[4]);
        assert!(c[3] != c[0] && c[4] != c[0]);
    }

    #[test]
    fn greedy_refinement_also_works() {
        let leiden = Leiden {
            randomness: 0.0,
            ..Leiden::default()
        };
        let p = leiden.run(&ring_of_cliques(4, 4), &mut ChaCha8Rng::seed_from_u64(2)).unwrap().partition;
        assert_eq!(p.community_count(), 4);
    }
}
