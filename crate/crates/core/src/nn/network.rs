use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{
    backward, forward, init_seed, select_active, Activation, ActiveSet, LayerConfig, LayerInput,
    LayerScratch, LayerWeights, NnError, UpdateShape,
};
use crate::kernels::{LaneConfig, StorageOrder};
use crate::lsh::{LshInput, LshTables, QueryScratch};
use crate::optimizer::{AdamHyper, AdamScratch, AdamState, GradBlock};
use crate::quant::{apply_mode, QuantMode, StoragePolicy};
use crate::sparse_data::Example;

/// Everything needed to build a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerConfig>,
    pub hyper: AdamHyper,
    pub lanes: LaneConfig,
    pub policy: StoragePolicy,
    /// Seeds weight initialization. Hash functions carry their own seeds.
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let layers = &self.layers;
        if layers.is_empty() {
            return Err(NnError::Config("a network needs at least one layer"));
        }
        for (l, c) in layers.iter().enumerate() {
            c.validate()?;
            if l > 0 && c.m != layers[l - 1].n {
                return Err(NnError::Config("layer fan-in must equal the previous layer width"));
            }
            let last = l + 1 == layers.len();
            if last != (c.activation == Activation::Softmax) {
                return Err(NnError::Config("exactly the output layer uses softmax"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    config: LayerConfig,
    weights: LayerWeights,
    adam: AdamState,
    tables: Option<LshTables>,
}

impl Layer {
    pub fn config(&self) -> &LayerConfig {
        &self.config
    }

    pub fn weights(&self) -> &LayerWeights {
        &self.weights
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn tables(&self) -> Option<&LshTables> {
        self.tables.as_ref()
    }
}

/// Per-sample shape record of one layer's update.
pub type LayerTrace = UpdateShape;

/// Outcome of one sample's forward/backward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    pub loss: f64,
    /// Active neurons in the output layer.
    pub active: usize,
    /// Width of the output layer.
    pub outputs: usize,
    /// Weight entries with a gradient, summed over layers.
    pub touched: usize,
    /// Weight entries in the network.
    pub weights: usize,
}

/// One gradient block per layer.
pub type SampleGradients = Vec<GradBlock>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaintenanceStats {
    /// Neurons whose codes changed and were re-bucketed.
    pub changed: usize,
    /// Neurons hashed.
    pub checked: usize,
    pub full_rebuild: bool,
}

/// Per-thread buffers for forward, backward and optimizer passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    acts: Vec<ActiveSet>,
    scratch: Vec<LayerScratch>,
    dense: Vec<Vec<f32>>,
    ids: Vec<u32>,
    input_grad: Vec<f32>,
    pub grads: SampleGradients,
    pub trace: Vec<LayerTrace>,
    adam: AdamScratch,
}

impl Workspace {
    fn ensure(&mut self, layers: usize) {
        self.acts.resize_with(layers, Default::default);
        self.scratch.resize_with(layers, Default::default);
        self.dense.resize_with(layers + 1, Default::default);
        self.grads.resize_with(layers, Default::default);
        self.trace.resize(layers, UpdateShape::default());
    }

    /// Active set of layer `l` from the last pass.
    pub fn active(&self, l: usize) -> &ActiveSet {
        &self.acts[l]
    }
}

/// A stack of layers trained with sparse, hash-selected updates.
///
/// Reads and weight updates take `&self` and may run from many threads at
/// once (racy HOGWILD writes). Table maintenance takes `&mut self`.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    lanes: LaneConfig,
    policy: StoragePolicy,
    hyper: AdamHyper,
    seed: u64,
}

impl Network {
    pub fn new(spec: &NetworkSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let weights = spec
            .layers
            .iter()
            .enumerate()
            .map(|(l, c)| {
                LayerWeights::init_uniform(
                    c.n,
                    c.m,
                    c.order,
                    spec.policy.weights,
                    spec.policy.rounding,
                    &mut init_seed(spec.seed, l),
                )
            })
            .collect();
        Self::from_weights(spec, weights)
    }

    /// Build around existing weights (e.g. a checkpoint); tables are
    /// rebuilt and optimizer state starts fresh.
    pub fn from_weights(spec: &NetworkSpec, weights: Vec<LayerWeights>) -> Result<Self, NnError> {
        spec.validate()?;
        if weights.len() != spec.layers.len() {
            return Err(NnError::Config("one weight set per layer required"));
        }
        let mut layers = Vec::with_capacity(weights.len());
        for (config, mut w) in spec.layers.iter().zip(weights) {
            if (w.n(), w.m(), w.order()) != (config.n, config.m, config.order) {
                return Err(NnError::Config("weights do not match the layer configuration"));
            }
            if w.storage() != spec.policy.weights {
                w.convert_storage(spec.policy.weights, spec.policy.rounding);
            }
            let tables = match &config.lsh {
                Some(s) => Some(LshTables::with_lanes(s.hash, config.n, spec.lanes)?),
                None => None,
            };
            layers.push(Layer {
                config: *config,
                adam: AdamState::new(config.n, config.m, spec.hyper),
                weights: w,
                tables,
            });
        }
        let mut net = Self {
            layers,
            lanes: spec.lanes,
            policy: spec.policy,
            hyper: spec.hyper,
            seed: spec.seed,
        };
        net.maintain(true)?;
        Ok(net)
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            layers: self.layers.iter().map(|l| l.config).collect(),
            hyper: self.hyper,
            lanes: self.lanes,
            policy: self.policy,
            seed: self.seed,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].config.m
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].config.n
    }

    pub fn lanes(&self) -> LaneConfig {
        self.lanes
    }

    pub fn set_lanes(&mut self, lanes: LaneConfig) {
        self.lanes = lanes;
        for t in self.layers.iter_mut().filter_map(|l| l.tables.as_mut()) {
            t.set_lanes(lanes);
        }
    }

    pub fn policy(&self) -> StoragePolicy {
        self.policy
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.layers[0].adam.t()
    }

    /// Change the quantization mode; only allowed before the first step.
    pub fn set_quant_mode(&mut self, mode: QuantMode) -> Result<(), NnError> {
        if self.step() > 0 {
            return Err(NnError::ModeChange);
        }
        self.policy = apply_mode(mode, self.policy.rounding);
        for layer in &mut self.layers {
            layer
                .weights
                .convert_storage(self.policy.weights, self.policy.rounding);
        }
        self.maintain(true)?;
        Ok(())
    }

    /// Weights of every layer, in their storage order, as plain floats.
    pub fn weight_snapshot(&self) -> Vec<(Vec<f32>, Vec<f32>)> {
        self.layers
            .iter()
            .map(|l| (l.weights.snapshot(), l.weights.bias().to_vec()))
            .collect()
    }

    /// Total number of weight entries (biases excluded).
    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.config.n * l.config.m).sum()
    }

    /// Forward and backward pass for one example, leaving its gradients in
    /// `ws.grads` and its update shapes in `ws.trace`. Weights are only
    /// read. Returns `None` (and no gradients) for an example without
    /// labels.
    pub fn compute_gradients<R: Rng>(
        &self,
        example: Example<'_>,
        rng: &mut R,
        ws: &mut Workspace,
    ) -> Result<Option<SampleStats>, NnError> {
        let nl = self.layers.len();
        ws.ensure(nl);
        ws.grads.iter_mut().for_each(GradBlock::clear);
        if example.labels.is_empty() {
            return Ok(None);
        }
        let n_out = self.output_dim();
        if let Some(&l) = example.labels.iter().find(|&&l| l as usize >= n_out) {
            return Err(NnError::InputDim {
                expected: n_out,
                found: l as usize + 1,
            });
        }
        self.forward_pass(example, Some(example.labels), rng, ws, true)?;

        // Output errors: softmax cross-entropy against uniform label mass.
        let out = &mut ws.acts[nl - 1];
        let target = 1.0 / example.labels.len() as f32;
        let max = out.pre.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f64 = out
            .pre
            .iter()
            .map(|&z| crate::math::expf(z - max) as f64)
            .sum();
        let log_sum = crate::math::ln(sum) + max as f64;
        let mut loss = 0.0f64;
        for (k, &i) in out.ids.iter().enumerate() {
            let y = if example.labels.contains(&i) { target } else { 0.0 };
            out.errors[k] = out.activations[k] - y;
            if y > 0.0 {
                loss -= y as f64 * (out.pre[k] as f64 - log_sum);
            }
        }

        let mut touched = 0;
        for l in (0..nl).rev() {
            let layer = &self.layers[l];
            let input = layer_input(example, l, &ws.dense, layer.config.order);
            let want_input_grad = l > 0;
            backward(
                &layer.weights,
                input,
                &ws.acts[l],
                self.lanes,
                &mut ws.scratch[l],
                &mut ws.grads[l],
                if want_input_grad {
                    Some(&mut ws.input_grad)
                } else {
                    None
                },
            )?;
            let g = &ws.grads[l];
            ws.trace[l] = UpdateShape {
                n: layer.config.n,
                m: layer.config.m,
                active_rows: g.rows.len(),
                input_support: g.cols.len(),
            };
            touched += g.touched();
            if want_input_grad {
                // Errors of the previous layer: dL/da masked by ReLU'.
                let prev = &mut ws.acts[l - 1];
                for (k, &i) in prev.ids.iter().enumerate() {
                    prev.errors[k] = if prev.pre[k] > 0.0 {
                        ws.input_grad[i as usize]
                    } else {
                        0.0
                    };
                }
            }
        }

        Ok(Some(SampleStats {
            loss,
            active: ws.acts[nl - 1].len(),
            outputs: n_out,
            touched,
            weights: self.num_weights(),
        }))
    }

    /// Scores of every output neuron for `example`: dense, FP32
    /// activations, no sampling. The returned slice is the output layer's
    /// pre-softmax values.
    pub fn scores<'w>(
        &self,
        example: Example<'_>,
        ws: &'w mut Workspace,
    ) -> Result<&'w [f32], NnError> {
        let nl = self.layers.len();
        ws.ensure(nl);
        let mut unused = NoRng;
        self.forward_pass(example, None, &mut unused, ws, false)?;
        Ok(&ws.acts[nl - 1].pre)
    }

    /// Index of the highest output score, lowest index on ties.
    pub fn predict(&self, example: Example<'_>, ws: &mut Workspace) -> Result<u32, NnError> {
        let scores = self.scores(example, ws)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(best as u32)
    }

    fn forward_pass<R: Rng>(
        &self,
        example: Example<'_>,
        labels: Option<&[u32]>,
        rng: &mut R,
        ws: &mut Workspace,
        training: bool,
    ) -> Result<(), NnError> {
        let nl = self.layers.len();
        if example.indices.len() != example.values.len() {
            return Err(NnError::InputDim {
                expected: example.indices.len(),
                found: example.values.len(),
            });
        }
        if self.layers[0].config.order == StorageOrder::RowMajor {
            // Row-major weights need a dense input vector.
            let x = &mut ws.dense[0];
            x.clear();
            x.resize(self.input_dim(), 0.0);
            for (&j, &v) in example.indices.iter().zip(example.values) {
                let slot = x.get_mut(j as usize).ok_or(NnError::InputDim {
                    expected: self.input_dim(),
                    found: j as usize + 1,
                })?;
                *slot = v;
            }
        }
        let quantize = match (training, self.policy.quantize_activations) {
            (true, true) => Some(self.policy.rounding),
            _ => None,
        };
        for l in 0..nl {
            let layer = &self.layers[l];
            let (before, after) = ws.dense.split_at_mut(l + 1);
            let input = layer_input(example, l, before, layer.config.order);
            let tables = if training { layer.tables.as_ref() } else { None };
            select_active(
                &layer.config,
                tables,
                input,
                if l + 1 == nl { labels } else { None },
                rng,
                &mut ws.scratch[l],
                &mut ws.ids,
            )?;
            forward(
                &layer.config,
                &layer.weights,
                input,
                &ws.ids,
                self.lanes,
                quantize,
                &mut ws.scratch[l],
                &mut ws.acts[l],
            )?;
            if l + 1 < nl {
                ws.acts[l].scatter_activations(layer.config.n, &mut after[0]);
            }
        }
        Ok(())
    }

    /// Apply one sample's gradients at the current step counter. Safe to
    /// call concurrently; overlapping updates may be lost.
    pub fn apply_gradients(
        &self,
        grads: &[GradBlock],
        scratch: &mut AdamScratch,
    ) -> Result<(), NnError> {
        if grads.len() != self.layers.len() {
            return Err(NnError::Config("one gradient block per layer required"));
        }
        for (layer, g) in self.layers.iter().zip(grads) {
            if !g.is_empty() {
                layer
                    .adam
                    .apply_sparse(&layer.weights, g, self.lanes, scratch)?;
            }
        }
        Ok(())
    }

    /// Apply the gradients held in `ws.grads`.
    pub fn apply_workspace(&self, ws: &mut Workspace) -> Result<(), NnError> {
        let Workspace { grads, adam, .. } = ws;
        self.apply_gradients(grads, adam)
    }

    /// Start a new optimizer step (one batch) on every layer.
    pub fn begin_step(&self) {
        for layer in &self.layers {
            layer.adam.advance();
        }
    }

    /// Bring every LSH layer's tables in line with its current weights:
    /// neurons whose codes changed are deleted and re-inserted; with
    /// `full_rebuild` the tables are then rebuilt from scratch.
    pub fn maintain(&mut self, full_rebuild: bool) -> Result<MaintenanceStats, NnError> {
        let mut stats = MaintenanceStats {
            full_rebuild,
            ..Default::default()
        };
        let mut scratch = QueryScratch::default();
        for layer in &mut self.layers {
            let Some(tables) = layer.tables.as_mut() else {
                continue;
            };
            let w = &layer.weights;
            let mut row = vec![0.0; w.m()];
            for i in 0..w.n() {
                w.read_row(i, &mut row);
                if tables.update(i as u32, LshInput::Dense(&row), &mut scratch)? {
                    stats.changed += 1;
                }
                stats.checked += 1;
            }
            if full_rebuild {
                let rows = (0..w.n()).map(|i| {
                    let mut r = vec![0.0; w.m()];
                    w.read_row(i, &mut r);
                    r
                });
                tables.rebuild(rows)?;
            }
        }
        Ok(stats)
    }
}

fn layer_input<'a>(
    example: Example<'a>,
    l: usize,
    dense: &'a [Vec<f32>],
    order: StorageOrder,
) -> LayerInput<'a> {
    if l > 0 {
        LayerInput::Dense(&dense[l])
    } else if order == StorageOrder::RowMajor {
        LayerInput::Dense(&dense[0])
    } else {
        LayerInput::Sparse {
            indices: example.indices,
            values: example.values,
        }
    }
}

/// Generator for passes that never sample (evaluation without tables).
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("evaluation does not sample")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("evaluation does not sample")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("evaluation does not sample")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
        unreachable!("evaluation does not sample")
    }
}
