//! Mutual-information linkage tree, the learned-linkage baseline.
//!
//! Pairwise dependency between real-valued weights is estimated with the
//! bivariate Gaussian mutual information `-1/2 ln(1 - rho^2)`, where `rho` is
//! the sample Pearson correlation across the population. Variables are then
//! merged bottom-up with average linkage (UPGMA).

use crate::error::{Error, Result};
use crate::individual::Individual;
use crate::linkage_graph::Fos;
use crate::par::{self, Execution};

/// Correlations are clamped to `|rho| <= 1 - CORRELATION_CLAMP`.
pub const CORRELATION_CLAMP: f64 = 1e-12;

/// Symmetric, non-negative, diagonal ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    n: usize,
    values: Vec<f64>,
}

impl MiMatrix {
    /// Builds from a dense row-major matrix; only the upper triangle is read.
    pub fn from_dense(n: usize, dense: &[f64]) -> MiMatrix {
        assert_eq!(dense.len(), n * n);
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                values[i * n + j] = dense[i * n + j];
                values[j * n + i] = dense[i * n + j];
            }
        }
        MiMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

fn gaussian_mi(rho: f64) -> f64 {
    let r = rho.clamp(-1.0 + CORRELATION_CLAMP, 1.0 - CORRELATION_CLAMP);
    -0.5 * (1.0 - r * r).ln()
}

/// MI between every pair of variables; `samples` holds one row per
/// individual. Zero-variance variables get MI 0 with everything.
pub fn pairwise_mi(samples: &[&[f64]], exec: Execution) -> Result<MiMatrix> {
    if samples.len() < 3 {
        return Err(Error::PopulationTooSmall {
            needed: 3,
            actual: samples.len(),
        });
    }
    let n = samples[0].len();
    let rows = samples.len();
    // column-major centred data and column norms
    let mut centred = vec![0.0; n * rows];
    let mut norms = vec![0.0; n];
    for j in 0..n {
        let mean = samples.iter().map(|s| s[j]).sum::<f64>() / rows as f64;
        let col = &mut centred[j * rows..(j + 1) * rows];
        for (c, s) in col.iter_mut().zip(samples) {
            *c = s[j] - mean;
        }
        norms[j] = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let upper: Vec<Vec<f64>> = par::map_range(exec, n, |i| {
        let ci = &centred[i * rows..(i + 1) * rows];
        (i + 1..n)
            .map(|j| {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    return 0.0;
                }
                let cj = &centred[j * rows..(j + 1) * rows];
                let dot: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                gaussian_mi(dot / (norms[i] * norms[j]))
            })
            .collect()
    });
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &mi) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = mi;
            values[j * n + i] = mi;
        }
    }
    Ok(MiMatrix { n, values })
}

pub fn population_mi(pop: &[Individual], exec: Execution) -> Result<MiMatrix> {
    let rows: Vec<&[f64]> = pop.iter().map(|ind| ind.weights()).collect();
    pairwise_mi(&rows, exec)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Sorted variable indices.
    pub members: Vec<usize>,
    /// Node ids of the two merged children, `None` for leaves.
    pub children: Option<(usize, usize)>,
}

/// All `2l - 1` nodes: leaves `0..l` first, then merges in order, root last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageTreeFos {
    nodes: Vec<TreeNode>,
}

impl LinkageTreeFos {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Every node except the root, in creation order.
    pub fn subsets(&self) -> impl Iterator<Item = &[usize]> {
        let keep = if self.nodes.len() > 1 { self.nodes.len() - 1 } else { 0 };
        self.nodes[..keep].iter().map(|n| n.members.as_slice())
    }

    /// FOS without the root, optionally dropping subsets above a size cap.
    pub fn to_fos(&self, max_subset_size: Option<usize>) -> Fos {
        let cap = max_subset_size.unwrap_or(usize::MAX);
        Fos::new(self.subsets().filter(|s| s.len() <= cap).map(<[usize]>::to_vec).collect())
    }
}

/// Average-linkage agglomeration on MI similarity. The most similar pair of
/// clusters merges first; ties go to the pair with the smallest
/// `(min member, min member)`.
pub fn build_linkage_tree(mi: &MiMatrix) -> LinkageTreeFos {
    let n = mi.n;
    let mut nodes: Vec<TreeNode> = (0..n)
        .map(|i| TreeNode {
            members: vec![i],
            children: None,
        })
        .collect();
    if n == 0 {
        return LinkageTreeFos { nodes };
    }
    // cluster similarity, indexed by each cluster's smallest member
    let mut sim = mi.values.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut node_at: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];

    while active.len() > 1 {
        let mut best = (active[0], active[1]);
        let mut best_sim = f64::NEG_INFINITY;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let s = sim[a * n + b];
                if s > best_sim {
                    best_sim = s;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let s = (sa * sim[a * n + c] + sb * sim[b * n + c]) / (sa + sb);
            sim[a * n + c] = s;
            sim[c * n + a] = s;
        }
        let mut members = nodes[node_at[a]].members.clone();
        members.extend_from_slice(&nodes[node_at[b]].members);
        members.sort_unstable();
        nodes.push(TreeNode {
            members,
            children: Some((node_at[a], node_at[b])),
        });
        node_at[a] = nodes.len() - 1;
        size[a] += size[b];
        active.retain(|&c| c != b);
    }
    LinkageTreeFos { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn check_tree_property(t: &LinkageTreeFos, l: usize) {
        assert_eq!(t.nodes().len(), 2 * l - 1);
        for (id, node) in t.nodes().iter().enumerate() {
            match node.children {
                None => {
                    assert!(id < l);
                    assert_eq!(node.members, vec![id]);
                }
                Some((x, y)) => {
                    let mut union = t.nodes()[x].members.clone();
                    union.extend(&t.nodes()[y].members);
                    union.sort_unstable();
                    let before = union.len();
                    union.dedup();
                    assert_eq!(before, union.len(), "children overlap");
                    assert_eq!(union, node.members);
                }
            }
        }
        assert_eq!(t.subsets().count(), 2 * l - 2);
    }

    #[test]
    fn constant_variable_has_zero_mi() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mi = pairwise_mi(&refs, Execution::Sequential).unwrap();
        assert_eq!(mi.get(0, 1), 0.0);
        assert_eq!(mi.get(0, 2), 0.0);
        assert!(mi.get(1, 2) > 0.0);
    }

    #[test]
    fn affine_copy_hits_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                vec![x, 3.0 * x - 2.0]
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mi = pairwise_mi(&refs, Execution::Sequential).unwrap();
        let cap = -0.5 * (CORRELATION_CLAMP * (2.0 - CORRELATION_CLAMP)).ln();
        assert!((mi.get(0, 1) - cap).abs() < 1e-3, "{} vs {cap}", mi.get(0, 1));
        assert!((cap - 13.47).abs() < 0.01);
    }

    #[test]
    fn independent_columns_have_small_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..10_000).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mi = pairwise_mi(&refs, Execution::Parallel).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(mi.get(i, j) < 0.01);
                }
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let rows = [vec![1.0], vec![2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(pairwise_mi(&refs, Execution::Sequential).is_err());
    }

    #[test]
    fn strongest_pair_merges_first() {
        let dense = [0.0, 5.0, 0.1, 5.0, 0.0, 0.2, 0.1, 0.2, 0.0];
        let t = build_linkage_tree(&MiMatrix::from_dense(3, &dense));
        let subsets: Vec<&[usize]> = t.subsets().collect();
        assert_eq!(subsets, vec![&[0][..], &[1], &[2], &[0, 1]]);
        assert_eq!(t.nodes().last().unwrap().members, vec![0, 1, 2]);
    }

    #[test]
    fn equal_mi_uses_lowest_pair() {
        let n = 6;
        let dense = vec![1.0; n * n];
        let mi = MiMatrix::from_dense(n, &dense);
        let a = build_linkage_tree(&mi);
        assert_eq!(a, build_linkage_tree(&mi));
        assert_eq!(a.nodes()[n].members, vec![0, 1]);
        check_tree_property(&a, n);
    }

    #[test]
    fn random_trees_have_tree_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in [1usize, 2, 5, 17] {
            let dense: Vec<f64> = (0..l * l).map(|_| rng.random_range(0.0..2.0)).collect();
            let t = build_linkage_tree(&MiMatrix::from_dense(l, &dense));
            check_tree_property(&t, l);
            let fos = t.to_fos(Some(2));
            assert!(fos.subsets().iter().all(|s| s.len() <= 2));
        }
    }
}
