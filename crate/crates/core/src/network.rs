//! Fixed-topology tanh feedforward networks and the n-bit parity task.
//!
//! Weights are stored in one flat vector. Layer `l` contributes a block of
//! `(N_l + bias) x N_{l+1}` entries laid out row-major by source neuron, so
//! flat index = `offset(l) + i * N_{l+1} + j`. When biases are enabled the
//! row `i = N_l` holds the bias of each target neuron (a pseudo-input whose
//! activation is always 1).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neurons per layer, input and output included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayerSpecInput", into = "LayerSpecRepr")]
pub struct LayerSpec {
    sizes: Vec<usize>,
    bias: bool,
}

/// Accepts either a bare size list or `{ "sizes": [...], "bias": bool }`.
#[derive(Deserialize)]
#[serde(untagged)]
enum LayerSpecInput {
    Sizes(Vec<usize>),
    Full(LayerSpecRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerSpecRepr {
    sizes: Vec<usize>,
    #[serde(default = "default_true")]
    bias: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<LayerSpecInput> for LayerSpec {
    type Error = Error;

    fn try_from(r: LayerSpecInput) -> Result<Self> {
        match r {
            LayerSpecInput::Sizes(sizes) => LayerSpec::new(sizes),
            LayerSpecInput::Full(r) => LayerSpec::with_bias(r.sizes, r.bias),
        }
    }
}

impl From<LayerSpec> for LayerSpecRepr {
    fn from(s: LayerSpec) -> Self {
        LayerSpecRepr {
            sizes: s.sizes,
            bias: s.bias,
        }
    }
}

impl LayerSpec {
    /// Architecture with one bias per non-input neuron.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        Self::with_bias(sizes, true)
    }

    pub fn without_bias(sizes: Vec<usize>) -> Result<Self> {
        Self::with_bias(sizes, false)
    }

    pub fn with_bias(sizes: Vec<usize>, bias: bool) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidLayerSpec(sizes));
        }
        Ok(LayerSpec { sizes, bias })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn input_count(&self) -> usize {
        self.sizes[0]
    }

    /// Widths of the hidden layers only.
    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    /// Number of weight matrices, `L - 1`.
    pub fn matrix_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Rows of weight matrix `l`: the source neurons plus the bias row.
    pub fn rows(&self, l: usize) -> usize {
        self.sizes[l] + usize::from(self.bias)
    }

    pub fn matrix_len(&self, l: usize) -> usize {
        self.rows(l) * self.sizes[l + 1]
    }

    /// First flat index of weight matrix `l`.
    pub fn offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.matrix_len(k)).sum()
    }

    pub fn weight_count(&self) -> usize {
        (0..self.matrix_count()).map(|l| self.matrix_len(l)).sum()
    }

    pub fn flat_index(&self, w: WeightIndex) -> Result<usize> {
        let WeightIndex { layer, from, to } = w;
        if layer >= self.matrix_count() || from >= self.rows(layer) || to >= self.sizes[layer + 1] {
            return Err(Error::WeightIndexOutOfRange(w));
        }
        Ok(self.offset(layer) + from * self.sizes[layer + 1] + to)
    }

    pub fn weight_index(&self, flat: usize) -> Result<WeightIndex> {
        let mut rest = flat;
        for layer in 0..self.matrix_count() {
            let len = self.matrix_len(layer);
            if rest < len {
                let width = self.sizes[layer + 1];
                return Ok(WeightIndex {
                    layer,
                    from: rest / width,
                    to: rest % width,
                });
            }
            rest -= len;
        }
        Err(Error::FlatIndexOutOfRange {
            index: flat,
            count: self.weight_count(),
        })
    }

    /// True when `w` is a bias weight (source is the pseudo-input).
    pub fn is_bias(&self, w: WeightIndex) -> bool {
        self.bias && w.from == self.sizes[w.layer]
    }
}

/// Position of one weight: from neuron `from` of layer `layer` to neuron
/// `to` of layer `layer + 1`. `from == N_layer` denotes the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightIndex {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
}

impl WeightIndex {
    pub fn new(layer: usize, from: usize, to: usize) -> Self {
        WeightIndex { layer, from, to }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: LayerSpec,
    weights: Vec<f64>,
}

/// Result of propagating one input pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: f64,
    /// Post-tanh activations of each hidden layer.
    pub hidden: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(spec: LayerSpec, weights: Vec<f64>) -> Result<Self> {
        let expected = spec.weight_count();
        if weights.len() != expected {
            return Err(Error::WeightCount {
                expected,
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFiniteWeight(i));
        }
        Ok(Network { spec, weights })
    }

    pub fn zeros(spec: LayerSpec) -> Self {
        let n = spec.weight_count();
        Network {
            spec,
            weights: vec![0.0; n],
        }
    }

    /// Every weight drawn i.i.d. from `Normal(0, sigma^2)`.
    pub fn random<R: Rng + ?Sized>(spec: LayerSpec, sigma: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, sigma).expect("init sigma must be finite and non-negative");
        let weights = (0..spec.weight_count()).map(|_| normal.sample(rng)).collect();
        Network { spec, weights }
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Same architecture, new weights. Panics on length mismatch.
    pub fn with_weights(&self, weights: Vec<f64>) -> Network {
        assert_eq!(weights.len(), self.weights.len(), "weight vector length");
        Network {
            spec: self.spec.clone(),
            weights,
        }
    }

    pub fn weight(&self, w: WeightIndex) -> Result<f64> {
        Ok(self.weights[self.spec.flat_index(w)?])
    }

    pub fn set_weight(&mut self, w: WeightIndex, value: f64) -> Result<()> {
        let i = self.spec.flat_index(w)?;
        self.weights[i] = value;
        Ok(())
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.spec == other.spec
    }

    pub fn forward(&self, input: &[u8]) -> Result<Forward> {
        let n0 = self.spec.input_count();
        if input.len() != n0 {
            return Err(Error::InputLength {
                expected: n0,
                actual: input.len(),
            });
        }
        if let Some(&b) = input.iter().find(|&&b| b > 1) {
            return Err(Error::InputNotBinary(b));
        }
        let x: Vec<f64> = input.iter().map(|&b| f64::from(b)).collect();
        let mut prop = Propagator::new(self);
        prop.run(self, &x);
        let hidden = (1..self.spec.sizes.len() - 1)
            .map(|l| prop.layer(l).to_vec())
            .collect();
        Ok(Forward {
            output: prop.output(),
            hidden,
        })
    }

    /// Runs every `n_bits` pattern once, producing fitness, raw outputs and
    /// the hidden activation table in a single pass.
    pub fn evaluate(&self, n_bits: usize) -> Result<Evaluation> {
        if self.spec.input_count() != n_bits {
            return Err(Error::InputLength {
                expected: self.spec.input_count(),
                actual: n_bits,
            });
        }
        let patterns = 1usize << n_bits;
        let mut table = ActivationTable::zeros(patterns, self.spec.hidden_sizes().to_vec());
        let mut outputs = Vec::with_capacity(patterns);
        let mut correct = 0usize;
        let mut prop = Propagator::new(self);
        let mut x = vec![0.0; n_bits];
        for p in 0..patterns {
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = pattern_bit(p, k, n_bits) as f64;
            }
            prop.run(self, &x);
            let out = prop.output();
            if classify(out) == parity(p) {
                correct += 1;
            }
            outputs.push(out);
            let row = table.row_mut(p);
            let hidden = prop.hidden_block();
            row.copy_from_slice(hidden);
        }
        Ok(Evaluation {
            fitness: correct as f64 / patterns as f64,
            outputs,
            activations: table,
        })
    }

    /// Returns a copy in which neuron `j` of hidden layer `hidden` moves to
    /// position `perm[j]`. Incoming columns (bias included) and outgoing rows
    /// move together, so the computed function is unchanged.
    pub fn permute_hidden(&self, hidden: usize, perm: &[usize]) -> Network {
        let layer = hidden + 1;
        let n = self.spec.sizes[layer];
        assert_eq!(perm.len(), n, "permutation length");
        let mut out = self.weights.clone();

        let in_off = self.spec.offset(layer - 1);
        for i in 0..self.spec.rows(layer - 1) {
            for (j, &pj) in perm.iter().enumerate() {
                out[in_off + i * n + pj] = self.weights[in_off + i * n + j];
            }
        }
        let out_off = self.spec.offset(layer);
        let width = self.spec.sizes[layer + 1];
        for (j, &pj) in perm.iter().enumerate() {
            let src = out_off + j * width;
            let dst = out_off + pj * width;
            out[dst..dst + width].copy_from_slice(&self.weights[src..src + width]);
        }
        self.with_weights(out)
    }
}

/// Class predicted for a raw output: strictly positive is 1, else 0.
#[inline]
pub fn classify(output: f64) -> u8 {
    u8::from(output > 0.0)
}

#[inline]
pub fn parity(pattern: usize) -> u8 {
    (pattern.count_ones() & 1) as u8
}

/// Bit `k` of pattern `p`, most significant first, so patterns enumerate
/// bitstrings in lexicographic order.
#[inline]
pub fn pattern_bit(p: usize, k: usize, n_bits: usize) -> u8 {
    ((p >> (n_bits - 1 - k)) & 1) as u8
}

pub fn pattern_bits(p: usize, n_bits: usize) -> Vec<u8> {
    (0..n_bits).map(|k| pattern_bit(p, k, n_bits)).collect()
}

/// Fraction of all `2^n` inputs classified with the correct parity.
pub fn evaluate_parity(net: &Network, n_bits: usize) -> Result<f64> {
    Ok(net.evaluate(n_bits)?.fitness)
}

pub fn record_activations(net: &Network, n_bits: usize) -> Result<ActivationTable> {
    Ok(net.evaluate(n_bits)?.activations)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub outputs: Vec<f64>,
    pub activations: ActivationTable,
}

/// Hidden activations indexed `[pattern][hidden layer][neuron]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTable {
    patterns: usize,
    layer_sizes: Vec<usize>,
    layer_offsets: Vec<usize>,
    width: usize,
    values: Vec<f64>,
}

impl ActivationTable {
    pub fn zeros(patterns: usize, layer_sizes: Vec<usize>) -> Self {
        let mut layer_offsets = Vec::with_capacity(layer_sizes.len());
        let mut width = 0;
        for &n in &layer_sizes {
            layer_offsets.push(width);
            width += n;
        }
        ActivationTable {
            patterns,
            layer_sizes,
            layer_offsets,
            width,
            values: vec![0.0; patterns * width],
        }
    }

    pub fn patterns(&self) -> usize {
        self.patterns
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, pattern: usize, layer: usize, neuron: usize) -> f64 {
        self.values[pattern * self.width + self.layer_offsets[layer] + neuron]
    }

    /// Activations of one pattern for a single hidden layer.
    pub fn layer_row(&self, pattern: usize, layer: usize) -> &[f64] {
        let start = pattern * self.width + self.layer_offsets[layer];
        &self.values[start..start + self.layer_sizes[layer]]
    }

    fn row_mut(&mut self, pattern: usize) -> &mut [f64] {
        let start = pattern * self.width;
        &mut self.values[start..start + self.width]
    }

    /// L1 distance over all patterns between neuron `a` of this table and
    /// neuron `b` of `other`, both in hidden layer `layer`.
    pub fn profile_distance(&self, other: &ActivationTable, layer: usize, a: usize, b: usize) -> f64 {
        let ca = self.layer_offsets[layer] + a;
        let cb = other.layer_offsets[layer] + b;
        (0..self.patterns)
            .map(|p| (self.values[p * self.width + ca] - other.values[p * other.width + cb]).abs())
            .sum()
    }

    /// Moves neuron `j` of `layer` to position `perm[j]`.
    pub fn permute_layer(&mut self, layer: usize, perm: &[usize]) {
        let off = self.layer_offsets[layer];
        let n = self.layer_sizes[layer];
        let mut tmp = vec![0.0; n];
        for p in 0..self.patterns {
            let row = &mut self.values[p * self.width + off..p * self.width + off + n];
            for (j, &pj) in perm.iter().enumerate() {
                tmp[pj] = row[j];
            }
            row.copy_from_slice(&tmp);
        }
    }
}

/// Reusable scratch space for forward passes.
struct Propagator {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    acts: Vec<f64>,
    terms: Vec<f64>,
    /// Per matrix `l >= 1`: canonical order of the source neurons and the
    /// weights regrouped as `[target][source in canonical order]`. `None`
    /// when two neurons tie and per-term sorting is needed instead.
    canonical: Option<Vec<(Vec<usize>, Vec<f64>)>>,
    gathered: Vec<f64>,
}

/// Summation over a hidden layer's neurons must not depend on where each
/// neuron sits in the layer, or permuting neurons would change outputs in
/// the last bits. Two strategies are used:
///
/// * canonical order: every hidden neuron is ranked by its incoming weights
///   (read in the previous layer's canonical order) and its bias. The rank
///   travels with the neuron under any permutation, so sums visit the same
///   terms in the same order. Computed once per network.
/// * sorted terms: if two neurons of a layer have identical incoming
///   weights the ranking is ambiguous, so each sum sorts its terms by value.
impl Propagator {
    fn new(net: &Network) -> Self {
        let spec = &net.spec;
        let mut offsets = Vec::with_capacity(spec.sizes.len());
        let mut total = 0;
        for &n in &spec.sizes {
            offsets.push(total);
            total += n;
        }
        Propagator {
            sizes: spec.sizes.clone(),
            offsets,
            acts: vec![0.0; total],
            terms: Vec::new(),
            canonical: canonical_order(net).map(|orders| {
                (1..spec.matrix_count())
                    .map(|l| {
                        let order = orders[l].clone();
                        let n_out = spec.sizes[l + 1];
                        let block = &net.weights[spec.offset(l)..];
                        let packed = (0..n_out)
                            .flat_map(|j| order.iter().map(move |&i| block[i * n_out + j]))
                            .collect();
                        (order, packed)
                    })
                    .collect()
            }),
            gathered: Vec::new(),
        }
    }

    fn run(&mut self, net: &Network, input: &[f64]) {
        let spec = &net.spec;
        self.acts[..input.len()].copy_from_slice(input);
        let mut w_off = 0;
        for l in 0..spec.matrix_count() {
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let (prev, next) = self.acts.split_at_mut(self.offsets[l + 1]);
            let src = &prev[self.offsets[l]..self.offsets[l] + n_in];
            let dst = &mut next[..n_out];
            let block = &net.weights[w_off..w_off + spec.matrix_len(l)];
            let bias = spec.bias.then(|| &block[n_in * n_out..]);
            if l == 0 {
                // input neurons are never permuted
                dst.fill(0.0);
                for (i, &a) in src.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (z, &w) in dst.iter_mut().zip(&block[i * n_out..(i + 1) * n_out]) {
                        *z += w * a;
                    }
                }
                if let Some(b) = bias {
                    for (z, &bj) in dst.iter_mut().zip(b) {
                        *z += bj;
                    }
                }
            } else if let Some(canonical) = &self.canonical {
                let (order, packed) = &canonical[l - 1];
                self.gathered.clear();
                self.gathered.extend(order.iter().map(|&i| src[i]));
                for (j, (z, w)) in dst.iter_mut().zip(packed.chunks_exact(n_in)).enumerate() {
                    let sum = self.gathered.iter().zip(w).fold(0.0, |acc, (a, w)| acc + a * w);
                    *z = sum + bias.map_or(0.0, |b| b[j]);
                }
            } else {
                for (j, z) in dst.iter_mut().enumerate() {
                    self.terms.clear();
                    self.terms.extend(src.iter().enumerate().map(|(i, &a)| a * block[i * n_out + j]));
                    if let Some(b) = bias {
                        self.terms.push(b[j]);
                    }
                    self.terms.sort_unstable_by(f64::total_cmp);
                    *z = self.terms.iter().sum();
                }
            }
            for z in dst.iter_mut() {
                *z = z.tanh();
            }
            w_off += spec.matrix_len(l);
        }
    }

    fn layer(&self, l: usize) -> &[f64] {
        &self.acts[self.offsets[l]..self.offsets[l] + self.sizes[l]]
    }

    fn hidden_block(&self) -> &[f64] {
        let last = self.sizes.len() - 1;
        &self.acts[self.offsets[1]..self.offsets[last]]
    }

    fn output(&self) -> f64 {
        *self.acts.last().unwrap()
    }
}

/// Canonical neuron order per layer (identity for the input and output
/// layers), or `None` if some hidden layer has two neurons with identical
/// incoming weights.
fn canonical_order(net: &Network) -> Option<Vec<Vec<usize>>> {
    let spec = &net.spec;
    let mut orders: Vec<Vec<usize>> = vec![(0..spec.sizes[0]).collect()];
    for layer in 1..spec.sizes.len() - 1 {
        let n = spec.sizes[layer];
        let block = &net.weights[spec.offset(layer - 1)..spec.offset(layer - 1) + spec.matrix_len(layer - 1)];
        let prev = &orders[layer - 1];
        let key = |j: usize| {
            prev.iter()
                .map(move |&i| block[i * n + j])
                .chain(spec.bias.then(|| block[spec.sizes[layer - 1] * n + j]))
        };
        let cmp = |a: usize, b: usize| {
            key(a)
                .zip(key(b))
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cmp(a, b));
        if order.windows(2).any(|w| cmp(w[0], w[1]).is_eq()) {
            return None;
        }
        orders.push(order);
    }
    Some(orders)
}
