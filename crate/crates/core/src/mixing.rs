//! Variation operators: masked crossover, recombinative and gene-pool optimal
//! mixing, neuron-similarity alignment, uniform crossover and mutation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::individual::{Evaluator, Individual};
use crate::linkage_graph::Fos;
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedMask {
    pub indices: Vec<usize>,
    /// Folded exchange fraction, see [`cross_rate`].
    pub cross_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixingStats {
    pub accepted_masks: Vec<AcceptedMask>,
    pub evaluations_used: u64,
    /// Whether the returned individual is strictly fitter than the input.
    pub final_improved: bool,
}

/// `p0`'s weights with the positions in `subset` taken from `p1`.
pub fn cross_with_mask(p0: &Network, p1: &Network, subset: &[usize]) -> Result<Network> {
    if !p0.same_architecture(p1) {
        return Err(Error::ArchitectureMismatch);
    }
    let n = p0.weights().len();
    let mut w = p0.weights().to_vec();
    for &i in subset {
        if i >= n {
            return Err(Error::FlatIndexOutOfRange { index: i, count: n });
        }
        w[i] = p1.weights()[i];
    }
    Ok(p0.with_weights(w))
}

/// Fraction of weights exchanged, folded so that swapping a set and swapping
/// its complement count the same: `min(r, 1 - r)`.
pub fn cross_rate(subset_len: usize, total: usize) -> f64 {
    subset_len.min(total - subset_len) as f64 / total as f64
}

/// Recombinative optimal mixing: one fixed donor, FOS traversed in a random
/// order, each masked child kept only if strictly fitter.
pub fn rom<E, R>(p0: &Individual, p1: &Individual, fos: &Fos, evaluator: &E, rng: &mut R) -> Result<(Individual, MixingStats)>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    optimal_mixing(p0, fos, evaluator, rng, |_| Ok(p1))
}

/// Gene-pool optimal mixing: like [`rom`] but the donor is redrawn uniformly
/// from `pop` without `pop[exclude]` for every FOS element.
pub fn gom<E, R>(
    p0: &Individual,
    exclude: usize,
    pop: &[Individual],
    fos: &Fos,
    evaluator: &E,
    rng: &mut R,
) -> Result<(Individual, MixingStats)>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
{
    if pop.len() < 2 {
        return Err(Error::PopulationTooSmall {
            needed: 2,
            actual: pop.len(),
        });
    }
    optimal_mixing(p0, fos, evaluator, rng, |rng| {
        let mut k = rng.random_range(0..pop.len() - 1);
        if k >= exclude {
            k += 1;
        }
        Ok(&pop[k])
    })
}

fn optimal_mixing<'a, E, R, D>(
    p0: &Individual,
    fos: &Fos,
    evaluator: &E,
    rng: &mut R,
    mut donor: D,
) -> Result<(Individual, MixingStats)>
where
    E: Evaluator + ?Sized,
    R: Rng + ?Sized,
    D: FnMut(&mut R) -> Result<&'a Individual>,
{
    let total = p0.weights().len();
    let mut order: Vec<usize> = (0..fos.len()).collect();
    order.shuffle(rng);
    let mut working = p0.clone();
    let mut stats = MixingStats::default();
    for k in order {
        let subset = &fos.subsets()[k];
        let d = donor(rng)?;
        let child = cross_with_mask(working.network(), d.network(), subset)?;
        let child = evaluator.evaluate(child);
        stats.evaluations_used += 1;
        if child.fitness() > working.fitness() {
            working = child;
            stats.accepted_masks.push(AcceptedMask {
                indices: subset.clone(),
                cross_rate: cross_rate(subset.len(), total),
            });
        }
    }
    stats.final_improved = working.fitness() > p0.fitness();
    Ok((working, stats))
}

/// For every hidden layer, `layers[h][j]` is the position that donor neuron
/// `j` moves to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronPermutation {
    pub layers: Vec<Vec<usize>>,
}

impl NeuronPermutation {
    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(|p| p.iter().enumerate().all(|(j, &i)| i == j))
    }
}

/// Greedy alignment of `p1`'s hidden neurons to `p0`'s. Donor neurons are
/// taken in ascending order and each is matched to the unclaimed recipient
/// neuron with the smallest L1 distance between activation profiles over all
/// inputs; ties go to the lowest recipient index.
pub fn neuron_similarity_permutation(p0: &Individual, p1: &Individual) -> Result<NeuronPermutation> {
    if !p0.network().same_architecture(p1.network()) {
        return Err(Error::ArchitectureMismatch);
    }
    let a0 = p0.activations().ok_or(Error::MissingActivations)?;
    let a1 = p1.activations().ok_or(Error::MissingActivations)?;
    let layers = a0
        .layer_sizes()
        .iter()
        .enumerate()
        .map(|(h, &n)| {
            let mut free: Vec<usize> = (0..n).collect();
            (0..n)
                .map(|j| {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (slot, &i) in free.iter().enumerate() {
                        let d = a0.profile_distance(a1, h, i, j);
                        if d < best_d {
                            best_d = d;
                            best = slot;
                        }
                    }
                    free.remove(best)
                })
                .collect()
        })
        .collect();
    Ok(NeuronPermutation { layers })
}

/// Copy of `p1` with its hidden neurons reordered to line up with `p0`.
/// Incoming weights, biases and outgoing weights move with their neuron, so
/// the network computes exactly the same function.
pub fn neuron_similarity_rearrange(p0: &Individual, p1: &Individual) -> Result<Individual> {
    let perm = neuron_similarity_permutation(p0, p1)?;
    Ok(apply_permutation(p1, &perm))
}

pub fn apply_permutation(ind: &Individual, perm: &NeuronPermutation) -> Individual {
    let mut net = ind.network().clone();
    let mut table = ind.activations().expect("activation cache present").clone();
    for (h, p) in perm.layers.iter().enumerate() {
        net = net.permute_hidden(h, p);
        table.permute_layer(h, p);
    }
    ind.with_equivalent_network(net, table)
}

/// Each weight from `p0` or `p1` with probability 1/2. Also returns the
/// positions taken from `p1`.
pub fn uniform_crossover<R: Rng + ?Sized>(p0: &Network, p1: &Network, rng: &mut R) -> Result<(Network, Vec<usize>)> {
    if !p0.same_architecture(p1) {
        return Err(Error::ArchitectureMismatch);
    }
    let mut from_p1 = Vec::new();
    let w = p0
        .weights()
        .iter()
        .zip(p1.weights())
        .enumerate()
        .map(|(i, (&a, &b))| {
            if rng.random_bool(0.5) {
                from_p1.push(i);
                b
            } else {
                a
            }
        })
        .collect();
    Ok((p0.with_weights(w), from_p1))
}

/// Adds `Normal(0, sigma^2)` noise to each position with probability `rate`.
pub fn mutate<R: Rng + ?Sized>(weights: &[f64], rate: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("mutation sigma must be finite and positive");
    weights
        .iter()
        .map(|&w| if rng.random_bool(rate) { w + normal.sample(rng) } else { w })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::individual::ParityEvaluator;
    use crate::network::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_individual(eval: &ParityEvaluator, sizes: &[usize], rng: &mut ChaCha8Rng) -> Individual {
        let spec = LayerSpec::new(sizes.to_vec()).unwrap();
        eval.evaluate(Network::random(spec, 3.0, rng))
    }

    #[test]
    fn masks() {
        let spec = LayerSpec::new(vec![2, 2, 1]).unwrap();
        let a = Network::new(spec.clone(), vec![0.0; 9]).unwrap();
        let b = Network::new(spec, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(cross_with_mask(&a, &b, &[]).unwrap(), a);
        assert_eq!(cross_with_mask(&a, &b, &(0..9).collect::<Vec<_>>()).unwrap().weights(), b.weights());
        let c = cross_with_mask(&a, &b, &[0]).unwrap();
        assert_eq!(c.weights()[0], 1.0);
        assert!(c.weights()[1..].iter().all(|&x| x == 0.0));
        assert!(cross_with_mask(&a, &b, &[9]).is_err());
    }

    #[test]
    fn cross_rate_folds() {
        assert_eq!(cross_rate(10, 10), 0.0);
        assert_eq!(cross_rate(5, 10), 0.5);
        assert_eq!(cross_rate(3, 10), cross_rate(7, 10));
    }

    #[test]
    fn rom_with_identical_donor_changes_nothing() {
        let eval = ParityEvaluator::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p0 = random_individual(&eval, &[3, 3, 1], &mut rng);
        let fos = Fos::univariate(p0.weights().len());
        let (out, stats) = rom(&p0, &p0, &fos, &eval, &mut rng).unwrap();
        assert_eq!(out, p0);
        assert_eq!(stats.evaluations_used, fos.len() as u64);
        assert!(stats.accepted_masks.is_empty());
        assert!(!stats.final_improved);
    }

    #[test]
    fn rom_takes_strictly_better_weight() {
        let eval = ParityEvaluator::new(1);
        let spec = LayerSpec::without_bias(vec![1, 1]).unwrap();
        let p0 = eval.evaluate(Network::new(spec.clone(), vec![-1.0]).unwrap());
        let p1 = eval.evaluate(Network::new(spec, vec![1.0]).unwrap());
        assert_eq!((p0.fitness(), p1.fitness()), (0.5, 1.0));
        let (out, stats) = rom(&p0, &p1, &Fos::univariate(1), &eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.weights(), &[1.0]);
        assert_eq!(stats.accepted_masks.len(), 1);
        assert_eq!(stats.accepted_masks[0].cross_rate, 0.0);
        assert!(stats.final_improved);
    }

    #[test]
    fn rom_is_deterministic_and_monotone() {
        let eval = ParityEvaluator::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop: Vec<Individual> = (0..6).map(|_| random_individual(&eval, &[4, 4, 1], &mut rng)).collect();
        let fos = Fos::univariate(pop[0].weights().len());
        for w in pop.windows(2) {
            let a = rom(&w[0], &w[1], &fos, &eval, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = rom(&w[0], &w[1], &fos, &eval, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
            assert!(a.0.fitness() >= w[0].fitness());
        }
    }

    #[test]
    fn gom_counts_and_needs_two() {
        let eval = ParityEvaluator::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ind = random_individual(&eval, &[3, 2, 1], &mut rng);
        let pop = vec![ind.clone(); 5];
        let fos = Fos::univariate(ind.weights().len());
        let before = eval.evaluations();
        let (out, stats) = gom(&pop[0], 0, &pop, &fos, &eval, &mut rng).unwrap();
        assert_eq!(out, pop[0]);
        assert_eq!(stats.evaluations_used, fos.len() as u64);
        assert_eq!(eval.evaluations() - before, fos.len() as u64);
        assert!(matches!(gom(&pop[0], 0, &pop[..1], &fos, &eval, &mut rng), Err(Error::PopulationTooSmall { .. })));

        let pop: Vec<Individual> = (0..5).map(|_| random_individual(&eval, &[3, 2, 1], &mut rng)).collect();
        let a = gom(&pop[2], 2, &pop, &fos, &eval, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = gom(&pop[2], 2, &pop, &fos, &eval, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ns_identity_on_self() {
        let eval = ParityEvaluator::new(4);
        let p = random_individual(&eval, &[4, 5, 5, 1], &mut ChaCha8Rng::seed_from_u64(5));
        assert!(neuron_similarity_permutation(&p, &p).unwrap().is_identity());
    }

    #[test]
    fn ns_recovers_scramble() {
        let eval = ParityEvaluator::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p0 = random_individual(&eval, &[4, 5, 5, 1], &mut rng);
            let mut net = p0.network().clone();
            for h in 0..2 {
                let mut pi: Vec<usize> = (0..5).collect();
                pi.shuffle(&mut rng);
                net = net.permute_hidden(h, &pi);
            }
            let p1 = eval.evaluate(net);
            let aligned = neuron_similarity_rearrange(&p0, &p1).unwrap();
            assert_eq!(aligned.weights(), p0.weights());
            assert_eq!(eval.evaluate(aligned.network().clone()).outputs(), p1.outputs());
        }
    }

    #[test]
    fn ns_preserves_function() {
        let eval = ParityEvaluator::new(5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let p0 = random_individual(&eval, &[5, 6, 6, 1], &mut rng);
            let p1 = random_individual(&eval, &[5, 6, 6, 1], &mut rng);
            let r = neuron_similarity_rearrange(&p0, &p1).unwrap();
            let re = eval.evaluate(r.network().clone());
            assert_eq!(re.outputs(), p1.outputs());
            assert_eq!(re.fitness(), p1.fitness());
            assert_eq!(re.activations(), r.activations());
        }
    }

    #[test]
    fn ns_requires_cache() {
        let eval = ParityEvaluator::new(2);
        let p = random_individual(&eval, &[2, 2, 1], &mut ChaCha8Rng::seed_from_u64(8));
        let bare = p.clone().without_activations();
        assert!(matches!(neuron_similarity_rearrange(&p, &bare), Err(Error::MissingActivations)));
    }

    #[test]
    fn uniform_crossover_behaviour() {
        let spec = LayerSpec::new(vec![8, 8, 8, 8, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Network::random(spec.clone(), 3.0, &mut rng);
        let b = Network::random(spec, 3.0, &mut rng);
        let (c, _) = uniform_crossover(&a, &a, &mut rng).unwrap();
        assert_eq!(c, a);
        let x = uniform_crossover(&a, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(x, uniform_crossover(&a, &b, &mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        let draws = 200;
        let frac: f64 = (0..draws)
            .map(|_| uniform_crossover(&a, &b, &mut rng).unwrap().1.len() as f64 / a.weights().len() as f64)
            .sum::<f64>()
            / draws as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn mutation_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = vec![0.5; 100_000];
        assert_eq!(mutate(&w, 0.0, 0.2, &mut rng), w);
        let m = mutate(&w, 0.3, 0.2, &mut rng);
        let changed = m.iter().filter(|&&x| x != 0.5).count() as f64 / w.len() as f64;
        assert!((changed - 0.3).abs() < 0.01, "{changed}");
        let m = mutate(&w, 1.0, 0.2, &mut rng);
        let mean_abs = m.iter().map(|x| (x - 0.5).abs()).sum::<f64>() / w.len() as f64;
        let expected = 0.2 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean_abs - expected).abs() < 0.003, "{mean_abs} vs {expected}");
    }
}
