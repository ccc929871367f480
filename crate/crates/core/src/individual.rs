use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;
use crate::network::{ActivationTable, Network};

/// A network together with its cached evaluation. The cache always matches
/// the weights: every constructor evaluates or carries over an evaluation of
/// an identical function.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    network: Network,
    fitness: f64,
    outputs: Vec<f64>,
    activations: Option<ActivationTable>,
}

impl Individual {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn weights(&self) -> &[f64] {
        self.network.weights()
    }

    pub fn fitness(&self) -> f64 {
        self.fitness
    }

    /// Raw network output for each input pattern, in lexicographic order.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn activations(&self) -> Option<&ActivationTable> {
        self.activations.as_ref()
    }

    /// Drops the activation cache.
    pub fn without_activations(mut self) -> Individual {
        self.activations = None;
        self
    }

    /// Replaces the network by a functionally identical one (e.g. a hidden
    /// neuron permutation) while keeping the cached outputs.
    pub(crate) fn with_equivalent_network(&self, network: Network, activations: ActivationTable) -> Individual {
        Individual {
            network,
            fitness: self.fitness,
            outputs: self.outputs.clone(),
            activations: Some(activations),
        }
    }
}

/// Fitness function with a shared evaluation counter.
pub trait Evaluator: Sync {
    fn evaluate(&self, network: Network) -> Individual;
    fn evaluations(&self) -> u64;
}

/// n-bit parity accuracy. Every call to [`Evaluator::evaluate`] counts as one
/// evaluation.
#[derive(Debug)]
pub struct ParityEvaluator {
    n_bits: usize,
    counter: AtomicU64,
}

impl ParityEvaluator {
    pub fn new(n_bits: usize) -> Self {
        ParityEvaluator {
            n_bits,
            counter: AtomicU64::new(0),
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn try_evaluate(&self, network: Network) -> Result<Individual> {
        let e = network.evaluate(self.n_bits)?;
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(Individual {
            network,
            fitness: e.fitness,
            outputs: e.outputs,
            activations: Some(e.activations),
        })
    }
}

impl Evaluator for ParityEvaluator {
    /// Panics if the network's input width differs from `n_bits`.
    fn evaluate(&self, network: Network) -> Individual {
        self.try_evaluate(network).expect("network input width matches the parity task")
    }

    fn evaluations(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}
