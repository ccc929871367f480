//! Per-generation statistics: population convergence, recombination
//! disruptiveness and accepted cross rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::SetupKind;
use crate::individual::Individual;
use crate::par::{self, Execution};

/// One row of `records.csv`. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub trial_id: u32,
    pub setup: SetupKind,
    pub generation: u32,
    pub evaluations_used: u64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub mean_pairwise_cosine: f64,
    pub mean_parent_child_behavior_diff: f64,
    pub mean_cross_rate_accepted: f64,
    pub fos_subset_count_mean: f64,
}

/// CSV column names in order.
pub const RECORD_COLUMNS: [&str; 10] = [
    "trial_id",
    "setup",
    "generation",
    "evaluations_used",
    "best_fitness",
    "mean_fitness",
    "mean_pairwise_cosine",
    "mean_parent_child_behavior_diff",
    "mean_cross_rate_accepted",
    "fos_subset_count_mean",
];

/// Mean cosine similarity over all unordered pairs of weight vectors. Pairs
/// involving a zero vector contribute 0. Each pair's value is clamped to
/// [-1, 1] against rounding.
pub fn population_cosine_similarity(pop: &[Individual], exec: Execution) -> Result<f64> {
    let n = pop.len();
    if n < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, actual: n });
    }
    let norms: Vec<f64> = pop.iter().map(|p| p.weights().iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let rows = par::map_range(exec, n, |i| {
        let wi = pop[i].weights();
        (i + 1..n)
            .map(|j| {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    return 0.0;
                }
                let dot: f64 = wi.iter().zip(pop[j].weights()).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            })
            .sum::<f64>()
    });
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(rows.iter().sum::<f64>() / pairs)
}

/// Mean absolute difference of raw outputs over all input patterns.
pub fn behavior_difference(a: &Individual, b: &Individual) -> Result<f64> {
    if a.outputs().len() != b.outputs().len() || !a.network().same_architecture(b.network()) {
        return Err(Error::ArchitectureMismatch);
    }
    let n = a.outputs().len() as f64;
    Ok(a.outputs().iter().zip(b.outputs()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// Average behaviour difference of a child to each of its two parents.
pub fn parent_child_diff(child: &Individual, p0: &Individual, p1: &Individual) -> Result<f64> {
    Ok(0.5 * (behavior_difference(child, p0)? + behavior_difference(child, p1)?))
}

pub(crate) fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = xs.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
