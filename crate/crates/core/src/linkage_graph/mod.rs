//! Weight-proximity graphs, modularity, and marginal-product FOS extraction.
//!
//! Vertices are flat weight indices. Two weights are linked only when one
//! feeds a neuron and the other leaves the same neuron; the edge weight is
//! the absolute product of the two weights. Community detection over this
//! graph (see [`leiden`]) yields groups of mutually dependent weights that
//! are used as crossover masks.

pub mod leiden;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, WeightIndex};

pub use leiden::{leiden_partition, Leiden, LeidenOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Sparse undirected weighted graph. Each edge is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
    degree: Vec<f64>,
    total: f64,
}

impl ProximityGraph {
    /// Builds a graph from an edge list. Self-loops, out-of-range endpoints
    /// and negative or non-finite weights are rejected.
    pub fn from_edges(vertex_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut degree = vec![0.0; vertex_count];
        let mut total = 0.0;
        for e in &edges {
            if e.u >= vertex_count || e.v >= vertex_count || e.u == e.v {
                return Err(Error::Config(format!("invalid edge ({}, {})", e.u, e.v)));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::Config(format!("invalid edge weight {}", e.weight)));
            }
            degree[e.u] += e.weight;
            degree[e.v] += e.weight;
            total += e.weight;
        }
        Ok(ProximityGraph {
            vertex_count,
            edges,
            degree,
            total,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degree `k_i`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Sum of edge weights, `m`.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn is_degenerate(&self) -> bool {
        self.total <= 0.0
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    /// Dense symmetric adjacency matrix, row-major.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.vertex_count;
        let mut a = vec![0.0; n * n];
        for e in &self.edges {
            a[e.u * n + e.v] += e.weight;
            a[e.v * n + e.u] += e.weight;
        }
        a
    }

    /// Every edge weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> ProximityGraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                weight: e.weight * c,
                ..*e
            })
            .collect();
        ProximityGraph::from_edges(self.vertex_count, edges).expect("scaling keeps a valid graph")
    }

    fn same_structure(&self, other: &ProximityGraph) -> bool {
        self.vertex_count == other.vertex_count
            && self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| a.u == b.u && a.v == b.v)
    }

    /// Writes one `u v weight` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.u, e.v, e.weight)?;
        }
        Ok(())
    }
}

/// Links every weight entering a neuron with every weight leaving it, with
/// strength `|w_in * w_out|`. Bias weights count as incoming weights of the
/// neuron they feed.
pub fn weight_proximity(net: &Network) -> ProximityGraph {
    let spec = net.spec();
    let sizes = spec.sizes();
    let w = net.weights();
    let mut edges = Vec::new();
    for l in 0..spec.matrix_count().saturating_sub(1) {
        let in_off = spec.offset(l);
        let out_off = spec.offset(l + 1);
        let mid = sizes[l + 1];
        let next = sizes[l + 2];
        for i in 0..spec.rows(l) {
            for j in 0..mid {
                let u = in_off + i * mid + j;
                for k in 0..next {
                    let v = out_off + j * next + k;
                    edges.push(Edge {
                        u,
                        v,
                        weight: (w[u] * w[v]).abs(),
                    });
                }
            }
        }
    }
    ProximityGraph::from_edges(spec.weight_count(), edges).expect("proximity edges are valid")
}

/// Sums two same-architecture graphs after rescaling the second one to the
/// first one's total weight: `A = A0 + (m0 / m1) A1`.
pub fn combine_graphs(g0: &ProximityGraph, g1: &ProximityGraph) -> Result<ProximityGraph> {
    if !g0.same_structure(g1) {
        return Err(Error::ArchitectureMismatch);
    }
    if g1.is_degenerate() {
        return Err(Error::DegenerateGraph);
    }
    let scale = g0.total / g1.total;
    let edges = g0
        .edges
        .iter()
        .zip(&g1.edges)
        .map(|(a, b)| Edge {
            weight: a.weight + scale * b.weight,
            ..*a
        })
        .collect();
    ProximityGraph::from_edges(g0.vertex_count, edges)
}

/// Weight-space alternative to [`combine_graphs`]: rescale the second
/// network's raw weights by `sum(w0) / sum(w1)`, average the two weight
/// vectors and build one proximity graph from the average. A zero or
/// non-finite ratio leaves the second vector unscaled.
pub fn weight_average_graph(net0: &Network, net1: &Network) -> Result<ProximityGraph> {
    if !net0.same_architecture(net1) {
        return Err(Error::ArchitectureMismatch);
    }
    let s0: f64 = net0.weights().iter().sum();
    let s1: f64 = net1.weights().iter().sum();
    let ratio = s0 / s1;
    let scale = if ratio.is_finite() && ratio != 0.0 { ratio } else { 1.0 };
    let avg = net0
        .weights()
        .iter()
        .zip(net1.weights())
        .map(|(a, b)| 0.5 * (a + scale * b))
        .collect();
    Ok(weight_proximity(&net0.with_weights(avg)))
}

/// Community label per vertex, ids dense in `[0, community_count)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    community_of: Vec<usize>,
    community_count: usize,
}

impl Partition {
    /// Relabels arbitrary ids densely in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Partition {
        let max = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut remap = vec![usize::MAX; max];
        let mut next = 0;
        let community_of = labels
            .iter()
            .map(|&c| {
                if remap[c] == usize::MAX {
                    remap[c] = next;
                    next += 1;
                }
                remap[c]
            })
            .collect();
        Partition {
            community_of,
            community_count: next,
        }
    }

    pub fn singletons(n: usize) -> Partition {
        Partition {
            community_of: (0..n).collect(),
            community_count: n,
        }
    }

    pub fn single(n: usize) -> Partition {
        Partition {
            community_of: vec![0; n],
            community_count: usize::from(n > 0),
        }
    }

    pub fn community_of(&self) -> &[usize] {
        &self.community_of
    }

    pub fn community_count(&self) -> usize {
        self.community_count
    }

    pub fn len(&self) -> usize {
        self.community_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.community_of.is_empty()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count];
        for (v, &c) in self.community_of.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// Multi-group weighted modularity,
/// `Q = (1/2m) sum_ij (A_ij - k_i k_j / 2m) delta(c_i, c_j)`.
pub fn modularity(g: &ProximityGraph, p: &Partition) -> Result<f64> {
    if p.len() != g.vertex_count {
        return Err(Error::PartitionSize {
            expected: g.vertex_count,
            actual: p.len(),
        });
    }
    if g.is_degenerate() {
        return Err(Error::DegenerateGraph);
    }
    let two_m = 2.0 * g.total;
    let c = p.community_of();
    let mut internal = vec![0.0; p.community_count()];
    let mut strength = vec![0.0; p.community_count()];
    for e in &g.edges {
        if c[e.u] == c[e.v] {
            internal[c[e.u]] += e.weight;
        }
    }
    for (v, &k) in g.degree.iter().enumerate() {
        strength[c[v]] += k;
    }
    let q = internal
        .iter()
        .zip(&strength)
        .map(|(&inside, &k)| 2.0 * inside / two_m - (k / two_m) * (k / two_m))
        .sum();
    Ok(q)
}

/// Family of subsets of weight indices, used as crossover masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fos {
    subsets: Vec<Vec<usize>>,
}

impl Fos {
    pub fn new(subsets: Vec<Vec<usize>>) -> Fos {
        Fos { subsets }
    }

    /// One subset per variable.
    pub fn univariate(n: usize) -> Fos {
        Fos {
            subsets: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Pairwise disjoint and covering `[0, n)`.
    pub fn is_marginal_product(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for s in &self.subsets {
            for &i in s {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|b| b)
    }
}

/// One subset per community, each sorted, ordered by smallest member.
pub fn fos_from_partition(p: &Partition) -> Fos {
    let mut subsets: Vec<Vec<usize>> = p.members().into_iter().filter(|s| !s.is_empty()).collect();
    subsets.sort_by_key(|s| s[0]);
    Fos { subsets }
}

/// Human-readable label of a weight, e.g. `w0,1,0` or `b0,0` for a bias.
pub fn weight_label(net: &Network, flat: usize) -> String {
    let w: WeightIndex = net.spec().weight_index(flat).expect("flat index in range");
    if net.spec().is_bias(w) {
        format!("b{},{}", w.layer, w.to)
    } else {
        format!("w{},{},{}", w.layer, w.from, w.to)
    }
}

/// Renders the dense proximity matrix as a whitespace-aligned table with
/// weight labels on both axes. Entries use shortest round-trip formatting.
pub fn render_proximity_matrix(net: &Network) -> String {
    let g = weight_proximity(net);
    let n = g.vertex_count();
    let dense = g.dense();
    let labels: Vec<String> = (0..n).map(|i| weight_label(net, i)).collect();
    let cells: Vec<String> = dense.iter().map(|x| format!("{x}")).collect();
    let width = labels
        .iter()
        .chain(cells.iter())
        .map(|s| s.len())
        .max()
        .unwrap_or(1);
    let mut out = String::new();
    out.push_str(&format!("{:>width$}", ""));
    for l in &labels {
        out.push_str(&format!(" {l:>width$}"));
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{l:>width$}"));
        for c in &cells[i * n..(i + 1) * n] {
            out.push_str(&format!(" {c:>width$}"));
        }
        out.push('\n');
    }
    out
}
