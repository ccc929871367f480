//! Brute-force modularity optimum for small graphs.
//!
//! Enumerates every set partition as a restricted growth string and scores
//! it with the dense-matrix modularity formula. This shares no code with
//! [`crate::linkage_graph::modularity`] or the Leiden implementation, so it
//! can be used to check both.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linkage_graph::{Edge, ProximityGraph};

/// Largest vertex count accepted by [`exhaustive_optimum`] (Bell(12) ~ 4.2M).
pub const MAX_EXHAUSTIVE_VERTICES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub quality: f64,
    pub labels: Vec<usize>,
    pub partitions_checked: u64,
}

pub fn exhaustive_optimum(g: &ProximityGraph) -> Result<Optimum> {
    let n = g.vertex_count();
    if n == 0 || n > MAX_EXHAUSTIVE_VERTICES {
        return Err(Error::Config(format!(
            "exhaustive search supports 1..={MAX_EXHAUSTIVE_VERTICES} vertices, got {n}"
        )));
    }
    let mut a = vec![0.0; n * n];
    for e in g.edges() {
        a[e.u * n + e.v] += e.weight;
        a[e.v * n + e.u] += e.weight;
    }
    let k: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m <= 0.0 {
        return Err(Error::DegenerateGraph);
    }
    // B_ij = A_ij - k_i k_j / 2m
    let b: Vec<f64> = (0..n * n).map(|x| a[x] - k[x / n] * k[x % n] / two_m).collect();

    let mut labels = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    let mut best = Optimum {
        quality: f64::NEG_INFINITY,
        labels: labels.clone(),
        partitions_checked: 0,
    };
    loop {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += b[i * n + j];
                }
            }
        }
        q /= two_m;
        best.partitions_checked += 1;
        if q > best.quality {
            best.quality = q;
            best.labels.copy_from_slice(&labels);
        }
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(best);
            }
            if labels[i] <= maxes[i - 1] {
                labels[i] += 1;
                let m = maxes[i - 1].max(labels[i]);
                maxes[i] = m;
                for j in i + 1..n {
                    labels[j] = 0;
                    maxes[j] = m;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability `density`, weights uniform in `[0.05, 1)`.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> ProximityGraph {
    let mut edges = Vec::new();
    let mut present = vec![false; n * n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        present[u * n + v] = true;
        edges.push(Edge {
            u,
            v,
            weight: rng.random_range(0.05..1.0),
        });
    }
    for u in 0..n {
        for v in u + 1..n {
            if !present[u * n + v] && rng.random_bool(density) {
                edges.push(Edge {
                    u,
                    v,
                    weight: rng.random_range(0.05..1.0),
                });
            }
        }
    }
    ProximityGraph::from_edges(n, edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumerates_bell_numbers() {
        let bell = [1u64, 2, 5, 15, 52, 203, 877, 4140];
        for (i, &b) in bell.iter().enumerate() {
            let g = random_connected_graph(i + 1, 0.5, &mut ChaCha8Rng::seed_from_u64(i as u64));
            if g.is_degenerate() {
                continue;
            }
            assert_eq!(exhaustive_optimum(&g).unwrap().partitions_checked, b);
        }
    }

    #[test]
    fn two_triangles_optimum() {
        let mut edges = Vec::new();
        for base in [0, 3] {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                edges.push(Edge { u: base + a, v: base + b, weight: 1.0 });
            }
        }
        let g = ProximityGraph::from_edges(6, edges).unwrap();
        let opt = exhaustive_optimum(&g).unwrap();
        assert!((opt.quality - 0.5).abs() < 1e-12);
        assert_eq!(opt.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn generated_graphs_are_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = random_connected_graph(8, 0.2, &mut rng);
            assert!(g.edges().len() >= 7);
        }
    }
}
