//! Layers with contiguous weight storage, hash-selected active sets, and
//! sparse forward/backward passes.
//!
//! Which product a layer can run is decided by its storage order and the
//! density of its input and output:
//!
//! * dense input, row-major weights: one inner product per active neuron
//!   (any output density);
//! * dense output, column-major weights: one scaled column per non-zero
//!   input coordinate (any input density).
//!
//! The backward input gradient `W^T delta` uses the same buffer read as the
//! transpose, which flips the order, so each layer's backward pass runs the
//! other product.

mod network;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::kernels::{axpy_unchecked, dot_unchecked, KernelError, LaneConfig, StorageOrder};
use crate::lsh::{HashFamilyParams, LshError, LshInput, LshTables, QueryScratch};
use crate::optimizer::{GradBlock, OptimError};
use crate::param::ParamBuffer;
use crate::quant::{self, Rounding, WeightStorage};
use crate::{math, rng};

pub use network::{
    Layer, LayerTrace, MaintenanceStats, Network, NetworkSpec, SampleGradients, SampleStats,
    Workspace,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("layout: {0}")]
    Layout(LayoutViolation),
    #[error("invalid layer configuration: {0}")]
    Config(&'static str),
    #[error("active set has {ids} ids but {errors} error values")]
    ActiveMismatch { ids: usize, errors: usize },
    #[error("input dimension {found} does not match fan-in {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("buffer holds {found} values, expected {expected}")]
    BufferLen { expected: usize, found: usize },
    #[error("quantization mode cannot change after training started")]
    ModeChange,
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// An (input density, storage order, output density) combination that
/// cannot be run as one of the two vectorizable products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutViolation {
    /// Row-major weights need a dense input.
    SparseInputRowMajor,
    /// Column-major weights need a dense output (every neuron active).
    SparseOutputColMajor,
}

impl core::fmt::Display for LayoutViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LayoutViolation::SparseInputRowMajor => f.write_str(
                "case 1 (dense x, row-major W) violated: row-major weights given a sparse input",
            ),
            LayoutViolation::SparseOutputColMajor => f.write_str(
                "case 2 (dense y, column-major W) violated: column-major weights with a sparse active set",
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// Softmax normalized over the active set only.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pub hash: HashFamilyParams,
    /// Active sets smaller than this are padded with random neurons.
    pub min_active: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    /// Neurons.
    pub n: usize,
    /// Fan-in.
    pub m: usize,
    pub activation: Activation,
    pub order: StorageOrder,
    /// `Some` when the active set is selected through LSH tables.
    pub lsh: Option<SparsityConfig>,
}

impl LayerConfig {
    pub fn use_lsh(&self) -> bool {
        self.lsh.is_some()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.n == 0 || self.m == 0 {
            return Err(NnError::Config("layer dimensions must be positive"));
        }
        if let Some(s) = &self.lsh {
            if s.min_active == 0 || s.min_active > self.n {
                return Err(NnError::Config("min_active must be in [1, n] with LSH"));
            }
            if s.hash.input_dim != self.m {
                return Err(NnError::Config("hash input_dim must equal the layer fan-in"));
            }
            if self.order == StorageOrder::ColMajor {
                return Err(NnError::Layout(LayoutViolation::SparseOutputColMajor));
            }
            s.hash.validate()?;
        }
        Ok(())
    }

    /// Check the layer can consume an input of the given density.
    pub fn check_input(&self, sparse_input: bool) -> Result<(), NnError> {
        if sparse_input && self.order == StorageOrder::RowMajor {
            return Err(NnError::Layout(LayoutViolation::SparseInputRowMajor));
        }
        Ok(())
    }
}

/// One contiguous `n x m` weight buffer plus bias, with a storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    buffer: ParamBuffer,
    bias: ParamBuffer,
    order: StorageOrder,
    n: usize,
    m: usize,
}

impl LayerWeights {
    pub fn zeros(n: usize, m: usize, order: StorageOrder, storage: WeightStorage) -> Self {
        Self {
            buffer: ParamBuffer::zeros(n * m, storage),
            bias: ParamBuffer::zeros(n, storage),
            order,
            n,
            m,
        }
    }

    /// Build from the logical matrix given row by row (`w[i, j]` at
    /// `i * m + j`), stored in `order`.
    pub fn from_row_major(
        n: usize,
        m: usize,
        order: StorageOrder,
        logical: &[f32],
        bias: &[f32],
        storage: WeightStorage,
        rounding: Rounding,
    ) -> Result<Self, NnError> {
        if logical.len() != n * m {
            return Err(NnError::BufferLen {
                expected: n * m,
                found: logical.len(),
            });
        }
        if bias.len() != n {
            return Err(NnError::BufferLen {
                expected: n,
                found: bias.len(),
            });
        }
        let mut physical = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                physical[order.index(n, m, i, j)] = logical[i * m + j];
            }
        }
        Self::from_physical(n, m, order, &physical, bias, storage, rounding)
    }

    /// Build from a buffer already laid out in `order`.
    pub fn from_physical(
        n: usize,
        m: usize,
        order: StorageOrder,
        physical: &[f32],
        bias: &[f32],
        storage: WeightStorage,
        rounding: Rounding,
    ) -> Result<Self, NnError> {
        if physical.len() != n * m {
            return Err(NnError::BufferLen {
                expected: n * m,
                found: physical.len(),
            });
        }
        if bias.len() != n {
            return Err(NnError::BufferLen {
                expected: n,
                found: bias.len(),
            });
        }
        Ok(Self {
            buffer: ParamBuffer::from_slice(physical, storage, rounding),
            bias: ParamBuffer::from_slice(bias, storage, rounding),
            order,
            n,
            m,
        })
    }

    /// Uniform Glorot initialization, drawn in logical row order so the
    /// values do not depend on the storage order. Bias starts at zero.
    pub fn init_uniform<R: Rng>(
        n: usize,
        m: usize,
        order: StorageOrder,
        storage: WeightStorage,
        rounding: Rounding,
        rng: &mut R,
    ) -> Self {
        let a = math::sqrt64(6.0 / (n + m) as f64) as f32;
        let logical: Vec<f32> = (0..n * m).map(|_| rng.gen_range(-a..a)).collect();
        Self::from_row_major(n, m, order, &logical, &vec![0.0; n], storage, rounding)
            .expect("sizes match")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> StorageOrder {
        self.order
    }

    pub fn buffer(&self) -> &ParamBuffer {
        &self.buffer
    }

    pub fn bias(&self) -> &ParamBuffer {
        &self.bias
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        self.order.index(self.n, self.m, i, j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.buffer.get(self.index(i, j))
    }

    pub fn set(&self, i: usize, j: usize, v: f32) {
        self.buffer.set(self.index(i, j), v)
    }

    /// Weight vector of neuron `i` (length `m`).
    pub fn read_row(&self, i: usize, out: &mut [f32]) {
        match self.order {
            StorageOrder::RowMajor => self.buffer.read_into(i * self.m, out),
            StorageOrder::ColMajor => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = self.buffer.get(j * self.n + i);
                }
            }
        }
    }

    /// Coordinate `j` of every neuron (length `n`).
    pub fn read_col(&self, j: usize, out: &mut [f32]) {
        match self.order {
            StorageOrder::ColMajor => self.buffer.read_into(j * self.n, out),
            StorageOrder::RowMajor => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.buffer.get(i * self.m + j);
                }
            }
        }
    }

    /// The physical buffer as plain floats.
    pub fn snapshot(&self) -> Vec<f32> {
        self.buffer.to_vec()
    }

    /// The logical matrix, row by row.
    pub fn to_row_major(&self) -> Vec<f32> {
        let phys = self.snapshot();
        let mut out = vec![0.0; self.n * self.m];
        for i in 0..self.n {
            for j in 0..self.m {
                out[i * self.m + j] = phys[self.index(i, j)];
            }
        }
        out
    }

    pub fn storage(&self) -> WeightStorage {
        self.buffer.storage()
    }

    pub(crate) fn convert_storage(&mut self, storage: WeightStorage, rounding: Rounding) {
        self.buffer = self.buffer.converted(storage, rounding);
        self.bias = self.bias.converted(storage, rounding);
    }
}

/// A layer input: the sparse example for the first layer, the previous
/// layer's activations (dense, zero outside its active set) after that.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Sparse { indices: &'a [u32], values: &'a [f32] },
    Dense(&'a [f32]),
}

impl<'a> LayerInput<'a> {
    pub fn is_sparse(&self) -> bool {
        matches!(self, LayerInput::Sparse { .. })
    }

    pub fn as_lsh(&self) -> LshInput<'a> {
        match *self {
            LayerInput::Sparse { indices, values } => LshInput::Sparse { indices, values },
            LayerInput::Dense(x) => LshInput::Dense(x),
        }
    }

    fn check(&self, m: usize) -> Result<(), NnError> {
        match *self {
            LayerInput::Dense(x) if x.len() != m => Err(NnError::InputDim {
                expected: m,
                found: x.len(),
            }),
            LayerInput::Sparse { indices, values } => {
                if indices.len() != values.len() {
                    return Err(NnError::InputDim {
                        expected: indices.len(),
                        found: values.len(),
                    });
                }
                match indices.iter().find(|&&j| j as usize >= m) {
                    Some(&j) => Err(NnError::Kernel(KernelError::IndexOutOfRange {
                        index: j as usize,
                        dim: m,
                    })),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Non-zero coordinates, in index order.
    pub fn support(&self, cols: &mut Vec<u32>, vals: &mut Vec<f32>) {
        cols.clear();
        vals.clear();
        match *self {
            LayerInput::Sparse { indices, values } => {
                for (&j, &v) in indices.iter().zip(values) {
                    if v != 0.0 {
                        cols.push(j);
                        vals.push(v);
                    }
                }
            }
            LayerInput::Dense(x) => {
                for (j, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        cols.push(j as u32);
                        vals.push(v);
                    }
                }
            }
        }
    }
}

/// Per-sample state of one layer: selected neurons with their
/// pre-activations, activations, and back-propagated errors `dL/dz`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveSet {
    pub ids: Vec<u32>,
    pub pre: Vec<f32>,
    pub activations: Vec<f32>,
    pub errors: Vec<f32>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Scatter activations into a dense vector of length `n`.
    pub fn scatter_activations(&self, n: usize, out: &mut Vec<f32>) {
        out.clear();
        out.resize(n, 0.0);
        for (&i, &a) in self.ids.iter().zip(&self.activations) {
            out[i as usize] = a;
        }
    }
}

/// Scratch buffers for the per-layer operations.
#[derive(Debug, Clone, Default)]
pub struct LayerScratch {
    pub(crate) query: QueryScratch,
    marks: Vec<u32>,
    generation: u32,
    vec_a: Vec<f32>,
    vec_b: Vec<f32>,
    cols: Vec<u32>,
    vals: Vec<f32>,
}

impl LayerScratch {
    fn begin_marks(&mut self, n: usize) -> u32 {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.marks.fill(0);
            self.generation = 1;
        }
        self.generation
    }
}

/// Choose the neurons to compute for one input.
///
/// Without LSH every neuron is active. With LSH the ids are the union of
/// the buckets `input` hashes to, then `labels` (training output layer),
/// then uniformly drawn distinct extra neurons until `min_active` is met.
pub fn select_active<R: Rng>(
    config: &LayerConfig,
    tables: Option<&LshTables>,
    input: LayerInput<'_>,
    labels: Option<&[u32]>,
    rng: &mut R,
    scratch: &mut LayerScratch,
    ids: &mut Vec<u32>,
) -> Result<(), NnError> {
    ids.clear();
    let (sparsity, tables) = match (&config.lsh, tables) {
        (Some(s), Some(t)) => (s, t),
        _ => {
            ids.extend(0..config.n as u32);
            return Ok(());
        }
    };
    tables.query_into(input.as_lsh(), &mut scratch.query, ids)?;
    let gen = scratch.begin_marks(config.n);
    for &i in ids.iter() {
        scratch.marks[i as usize] = gen;
    }
    for &l in labels.unwrap_or(&[]) {
        let mark = &mut scratch.marks[l as usize];
        if *mark != gen {
            *mark = gen;
            ids.push(l);
        }
    }
    pad_active(config.n, sparsity.min_active, rng, &mut scratch.marks, gen, ids);
    Ok(())
}

/// Append uniformly drawn ids not yet marked until `ids.len() >= target`.
fn pad_active<R: Rng>(
    n: usize,
    target: usize,
    rng: &mut R,
    marks: &mut [u32],
    gen: u32,
    ids: &mut Vec<u32>,
) {
    let target = target.min(n);
    while ids.len() < target {
        let i = rng.gen_range(0..n as u32);
        let mark = &mut marks[i as usize];
        if *mark != gen {
            *mark = gen;
            ids.push(i);
        }
    }
}

/// Pre-activations, activations and (cleared) errors for `ids`.
///
/// `quantize` rounds every stored activation through BF16.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    config: &LayerConfig,
    weights: &LayerWeights,
    input: LayerInput<'_>,
    ids: &[u32],
    lanes: LaneConfig,
    quantize: Option<Rounding>,
    scratch: &mut LayerScratch,
    out: &mut ActiveSet,
) -> Result<(), NnError> {
    let (n, m) = (weights.n(), weights.m());
    input.check(m)?;
    config.check_input(input.is_sparse())?;
    out.ids.clear();
    out.ids.extend_from_slice(ids);
    out.pre.clear();
    out.activations.clear();
    out.errors.clear();

    match weights.order() {
        StorageOrder::RowMajor => {
            let x = match input {
                LayerInput::Dense(x) => x,
                LayerInput::Sparse { .. } => unreachable!("checked above"),
            };
            let row = &mut scratch.vec_a;
            row.resize(m, 0.0);
            for &i in ids {
                weights.read_row(i as usize, row);
                out.pre
                    .push(dot_unchecked(x, row, lanes) + weights.bias().get(i as usize));
            }
        }
        StorageOrder::ColMajor => {
            if ids.len() != n || ids.iter().enumerate().any(|(k, &i)| k as u32 != i) {
                return Err(NnError::Layout(LayoutViolation::SparseOutputColMajor));
            }
            input.support(&mut scratch.cols, &mut scratch.vals);
            let (col, y) = (&mut scratch.vec_a, &mut scratch.vec_b);
            col.resize(n, 0.0);
            y.clear();
            y.resize(n, 0.0);
            for (&j, &v) in scratch.cols.iter().zip(&scratch.vals) {
                weights.read_col(j as usize, col);
                axpy_unchecked(v, col, y, lanes);
            }
            out.pre.extend(
                y.iter()
                    .enumerate()
                    .map(|(i, &s)| s + weights.bias().get(i)),
            );
        }
    }

    match config.activation {
        Activation::Relu => out.activations.extend(out.pre.iter().map(|&z| z.max(0.0))),
        Activation::Softmax => {
            let max = out.pre.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            out.activations
                .extend(out.pre.iter().map(|&z| math::expf(z - max)));
            let sum: f32 = out.activations.iter().sum();
            out.activations.iter_mut().for_each(|a| *a /= sum);
        }
    }
    if let Some(rounding) = quantize {
        quant::quantize_slice(&mut out.activations, rounding);
    }
    out.errors.resize(out.ids.len(), 0.0);
    Ok(())
}

/// Gradients of one layer from the errors stored in `act`.
///
/// Fills `grad` with the block `act.ids x support(input)` (support = the
/// non-zero input coordinates) and, when `input_grad` is given, writes the
/// dense `W^T delta` (length `m`) into it.
pub fn backward(
    weights: &LayerWeights,
    input: LayerInput<'_>,
    act: &ActiveSet,
    lanes: LaneConfig,
    scratch: &mut LayerScratch,
    grad: &mut GradBlock,
    input_grad: Option<&mut Vec<f32>>,
) -> Result<(), NnError> {
    let (n, m) = (weights.n(), weights.m());
    if act.errors.len() != act.ids.len() {
        return Err(NnError::ActiveMismatch {
            ids: act.ids.len(),
            errors: act.errors.len(),
        });
    }
    input.check(m)?;
    input.support(&mut scratch.cols, &mut scratch.vals);
    grad.set_outer(&act.ids, &act.errors, &scratch.cols, &scratch.vals);

    if let Some(dx) = input_grad {
        dx.clear();
        dx.resize(m, 0.0);
        match weights.order() {
            // W^T is column-major: scale row i of W (contiguous) by delta_i.
            StorageOrder::RowMajor => {
                let row = &mut scratch.vec_a;
                row.resize(m, 0.0);
                for (&i, &d) in act.ids.iter().zip(&act.errors) {
                    if d != 0.0 {
                        weights.read_row(i as usize, row);
                        axpy_unchecked(d, row, dx, lanes);
                    }
                }
            }
            // W^T is row-major: dense inner products against each column.
            StorageOrder::ColMajor => {
                let (delta, col) = (&mut scratch.vec_b, &mut scratch.vec_a);
                delta.clear();
                delta.resize(n, 0.0);
                for (&i, &d) in act.ids.iter().zip(&act.errors) {
                    delta[i as usize] = d;
                }
                col.resize(n, 0.0);
                for (j, g) in dx.iter_mut().enumerate() {
                    weights.read_col(j, col);
                    *g = dot_unchecked(delta, col, lanes);
                }
            }
        }
    }
    Ok(())
}

/// Sizes of one layer's update for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateShape {
    pub n: usize,
    pub m: usize,
    pub active_rows: usize,
    pub input_support: usize,
}

/// Fraction of the layer's weights that receive a gradient:
/// `|active| * |support(input)| / (n * m)`.
pub fn touched_weight_fraction(shape: &UpdateShape) -> f64 {
    (shape.active_rows * shape.input_support) as f64 / (shape.n * shape.m) as f64
}

pub(crate) fn init_seed(seed: u64, layer: usize) -> rand_chacha::ChaCha8Rng {
    rng::stream(seed, &[0x1A7E, layer as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::HashFamilyParams;

    fn relu_layer(n: usize, m: usize, order: StorageOrder) -> (LayerConfig, LayerWeights) {
        let cfg = LayerConfig {
            n,
            m,
            activation: Activation::Relu,
            order,
            lsh: None,
        };
        let logical: Vec<f32> = (0..n * m).map(|k| ((k * 7 % 13) as f32 - 6.0) * 0.1).collect();
        let bias: Vec<f32> = (0..n).map(|i| i as f32 * 0.01).collect();
        let w = LayerWeights::from_row_major(n, m, order, &logical, &bias, WeightStorage::F32, Rounding::Truncate)
            .unwrap();
        (cfg, w)
    }

    #[test]
    fn lemma_one_addressing() {
        let (_, w) = relu_layer(5, 3, StorageOrder::RowMajor);
        let (_, c) = relu_layer(5, 3, StorageOrder::ColMajor);
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(w.get(i, j), c.get(i, j));
            }
        }
        // The column-major buffer is the row-major buffer of the transpose.
        let cbuf = c.snapshot();
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(cbuf[j * 5 + i], w.get(i, j));
            }
        }
    }

    #[test]
    fn select_without_lsh_is_everything() {
        let (cfg, _) = relu_layer(6, 3, StorageOrder::RowMajor);
        let mut ids = Vec::new();
        let mut rng = rng::stream(1, &[]);
        select_active(&cfg, None, LayerInput::Dense(&[1.0; 3]), None, &mut rng, &mut LayerScratch::default(), &mut ids)
            .unwrap();
        assert_eq!(ids, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn select_pads_from_empty_tables() {
        let hash = HashFamilyParams::simhash(3, 2, 3, 4);
        let cfg = LayerConfig {
            n: 50,
            m: 3,
            activation: Activation::Softmax,
            order: StorageOrder::RowMajor,
            lsh: Some(SparsityConfig { hash, min_active: 7 }),
        };
        let tables = LshTables::new(hash, 50).unwrap();
        let mut ids = Vec::new();
        let mut rng = rng::stream(1, &[]);
        let mut scratch = LayerScratch::default();
        select_active(&cfg, Some(&tables), LayerInput::Dense(&[1.0; 3]), Some(&[9, 3]), &mut rng, &mut scratch, &mut ids)
            .unwrap();
        assert_eq!(ids.len(), 7);
        assert_eq!(&ids[..2], &[9, 3]);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 7);
        select_active(&cfg, Some(&tables), LayerInput::Dense(&[1.0; 3]), None, &mut rng, &mut scratch, &mut ids)
            .unwrap();
        assert_eq!(ids.len(), 7);
    }

    #[test]
    fn zero_input_relu_gives_zero() {
        let cfg = LayerConfig {
            n: 4,
            m: 3,
            activation: Activation::Relu,
            order: StorageOrder::RowMajor,
            lsh: None,
        };
        let w = LayerWeights::zeros(4, 3, StorageOrder::RowMajor, WeightStorage::F32);
        let mut act = ActiveSet::default();
        forward(&cfg, &w, LayerInput::Dense(&[0.0; 3]), &[0, 2], LaneConfig::default(), None, &mut LayerScratch::default(), &mut act)
            .unwrap();
        assert_eq!(act.activations, vec![0.0, 0.0]);
    }

    #[test]
    fn softmax_over_active_sums_to_one() {
        let (mut cfg, w) = relu_layer(9, 4, StorageOrder::RowMajor);
        cfg.activation = Activation::Softmax;
        let mut act = ActiveSet::default();
        forward(&cfg, &w, LayerInput::Dense(&[0.3, -1.0, 2.0, 0.5]), &[8, 1, 4], LaneConfig::default(), None, &mut LayerScratch::default(), &mut act)
            .unwrap();
        let sum: f32 = act.activations.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(act.activations.iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn layout_violations_are_reported() {
        let (cfg, w) = relu_layer(4, 3, StorageOrder::RowMajor);
        let mut act = ActiveSet::default();
        let mut s = LayerScratch::default();
        let err = forward(&cfg, &w, LayerInput::Sparse { indices: &[1], values: &[1.0] }, &[0], LaneConfig::default(), None, &mut s, &mut act)
            .unwrap_err();
        assert_eq!(err, NnError::Layout(LayoutViolation::SparseInputRowMajor));
        assert!(err.to_string().contains("case 1"));
        let (cfg, w) = relu_layer(4, 3, StorageOrder::ColMajor);
        let err = forward(&cfg, &w, LayerInput::Dense(&[1.0; 3]), &[0, 1], LaneConfig::default(), None, &mut s, &mut act)
            .unwrap_err();
        assert_eq!(err, NnError::Layout(LayoutViolation::SparseOutputColMajor));
        assert!(err.to_string().contains("case 2"));
    }

    #[test]
    fn singleton_gradient() {
        let (cfg, w) = relu_layer(4, 6, StorageOrder::ColMajor);
        let mut act = ActiveSet::default();
        let mut s = LayerScratch::default();
        let input = LayerInput::Sparse { indices: &[2], values: &[1.5] };
        forward(&cfg, &w, input, &[0, 1, 2, 3], LaneConfig::default(), None, &mut s, &mut act).unwrap();
        // Only neuron 3 carries error.
        act.errors = vec![0.0, 0.0, 0.0, -2.0];
        let mut g = GradBlock::default();
        backward(&w, input, &act, LaneConfig::default(), &mut s, &mut g, None).unwrap();
        assert_eq!(g.cols, vec![2]);
        for (r, &i) in g.rows.iter().enumerate() {
            let expect = if i == 3 { -3.0 } else { 0.0 };
            assert_eq!(g.get(r, 0), expect);
        }
        act.errors.pop();
        assert!(matches!(
            backward(&w, input, &act, LaneConfig::default(), &mut s, &mut g, None),
            Err(NnError::ActiveMismatch { ids: 4, errors: 3 })
        ));
    }

    #[test]
    fn zero_errors_give_zero_gradients() {
        for order in [StorageOrder::RowMajor, StorageOrder::ColMajor] {
            let (_, w) = relu_layer(4, 3, order);
            let act = ActiveSet {
                ids: vec![0, 1, 2, 3],
                pre: vec![0.0; 4],
                activations: vec![0.0; 4],
                errors: vec![0.0; 4],
            };
            let mut g = GradBlock::default();
            let mut dx = Vec::new();
            backward(&w, LayerInput::Dense(&[1.0, 2.0, 3.0]), &act, LaneConfig::default(), &mut LayerScratch::default(), &mut g, Some(&mut dx))
                .unwrap();
            assert!(g.values.iter().all(|&v| v == 0.0));
            assert_eq!(dx, vec![0.0; 3]);
        }
    }

    #[test]
    fn touched_fraction_examples() {
        let full = UpdateShape { n: 8, m: 5, active_rows: 8, input_support: 5 };
        assert_eq!(touched_weight_fraction(&full), 1.0);
        let one = UpdateShape { n: 8, m: 5, active_rows: 1, input_support: 1 };
        assert_eq!(touched_weight_fraction(&one), 1.0 / 40.0);
    }
}
