//! Lazy ADAM over contiguous parameter buffers.
//!
//! Only the entries a gradient block touches are updated, moments included.
//! Untouched entries keep their `m` and `v` undecayed, unlike dense ADAM.
//! The step counter `t` is advanced once per optimizer step (one batch) by
//! [`AdamState::advance`], independently of how many blocks are applied.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::kernels::{adam_update_unchecked, AdamStep, KernelError, LaneConfig, StorageOrder};
use crate::nn::LayerWeights;
use crate::param::ParamBuffer;
use crate::quant::WeightStorage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OptimError {
    #[error("gradient row {row} out of range for {n} neurons")]
    RowOutOfRange { row: u32, n: usize },
    #[error("gradient column {col} out of range for fan-in {m}")]
    ColOutOfRange { col: u32, m: usize },
    #[error("gradient block has {found} values, expected {expected}")]
    BlockShape { expected: usize, found: usize },
    #[error("optimizer state does not match the layer shape")]
    StateShape,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub bias_correction: bool,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            bias_correction: true,
        }
    }
}

impl AdamHyper {
    pub fn at_step(&self, t: u64) -> AdamStep {
        AdamStep {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            bias_correction: self.bias_correction,
            t,
        }
    }
}

/// Gradient of one layer restricted to `rows x cols`.
///
/// `values` is row-major over the block: the entry for
/// `(rows[r], cols[c])` is `values[r * cols.len() + c]`; `bias[r]` is the
/// bias gradient of neuron `rows[r]`. Row and column ids must be distinct.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradBlock {
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub values: Vec<f32>,
    pub bias: Vec<f32>,
}

impl GradBlock {
    pub fn clear(&mut self) {
        self.rows.clear();
        self.cols.clear();
        self.values.clear();
        self.bias.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Outer product `delta * x^T` with bias gradient `delta`.
    pub fn outer(rows: &[u32], delta: &[f32], cols: &[u32], x: &[f32]) -> Self {
        let mut g = Self::default();
        g.set_outer(rows, delta, cols, x);
        g
    }

    pub fn set_outer(&mut self, rows: &[u32], delta: &[f32], cols: &[u32], x: &[f32]) {
        self.clear();
        self.rows.extend_from_slice(rows);
        self.cols.extend_from_slice(cols);
        self.bias.extend_from_slice(delta);
        for &d in delta {
            self.values.extend(x.iter().map(|&v| d * v));
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols.len() + c]
    }

    /// Number of weight entries in the block.
    pub fn touched(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// Reusable buffers for [`AdamState::apply_sparse`].
#[derive(Debug, Clone, Default)]
pub struct AdamScratch {
    positions: Vec<usize>,
    w: Vec<f32>,
    m: Vec<f32>,
    v: Vec<f32>,
}

/// First and second moments congruent with a layer's weights and bias.
#[derive(Debug)]
pub struct AdamState {
    pub weight_m: ParamBuffer,
    pub weight_v: ParamBuffer,
    pub bias_m: ParamBuffer,
    pub bias_v: ParamBuffer,
    pub hyper: AdamHyper,
    t: AtomicU64,
}

impl Clone for AdamState {
    fn clone(&self) -> Self {
        Self {
            weight_m: self.weight_m.clone(),
            weight_v: self.weight_v.clone(),
            bias_m: self.bias_m.clone(),
            bias_v: self.bias_v.clone(),
            hyper: self.hyper,
            t: AtomicU64::new(self.t()),
        }
    }
}

impl AdamState {
    /// Zeroed FP32 moments for an `n x m` layer.
    pub fn new(n: usize, m: usize, hyper: AdamHyper) -> Self {
        Self {
            weight_m: ParamBuffer::zeros(n * m, WeightStorage::F32),
            weight_v: ParamBuffer::zeros(n * m, WeightStorage::F32),
            bias_m: ParamBuffer::zeros(n, WeightStorage::F32),
            bias_v: ParamBuffer::zeros(n, WeightStorage::F32),
            hyper,
            t: AtomicU64::new(0),
        }
    }

    pub fn t(&self) -> u64 {
        self.t.load(Ordering::Acquire)
    }

    /// Start a new optimizer step; returns the new counter value.
    pub fn advance(&self) -> u64 {
        self.t.fetch_add(1, Ordering::AcqRel) + 1
    }

    /// One ADAM update at the current step counter on every entry of
    /// `grad`. Safe to call from several threads at once; concurrent
    /// updates to the same entries may overwrite each other.
    pub fn apply_sparse(
        &self,
        weights: &LayerWeights,
        grad: &GradBlock,
        lanes: LaneConfig,
        scratch: &mut AdamScratch,
    ) -> Result<(), OptimError> {
        let (n, m) = (weights.n(), weights.m());
        if self.weight_m.len() != n * m || self.bias_m.len() != n {
            return Err(OptimError::StateShape);
        }
        let (nr, nc) = (grad.rows.len(), grad.cols.len());
        if grad.values.len() != nr * nc {
            return Err(OptimError::BlockShape {
                expected: nr * nc,
                found: grad.values.len(),
            });
        }
        if grad.bias.len() != nr {
            return Err(OptimError::BlockShape {
                expected: nr,
                found: grad.bias.len(),
            });
        }
        if let Some(&row) = grad.rows.iter().find(|&&r| r as usize >= n) {
            return Err(OptimError::RowOutOfRange { row, n });
        }
        if let Some(&col) = grad.cols.iter().find(|&&c| c as usize >= m) {
            return Err(OptimError::ColOutOfRange { col, m });
        }

        let step = self.hyper.at_step(self.t()).coeffs();
        let s = scratch;
        s.w.resize(nc, 0.0);
        s.m.resize(nc, 0.0);
        s.v.resize(nc, 0.0);
        let contiguous = weights.order() == StorageOrder::RowMajor
            && nc > 0
            && grad.cols.windows(2).all(|w| w[1] == w[0].wrapping_add(1));
        let buffer = weights.buffer();
        for (r, &i) in grad.rows.iter().enumerate() {
            let g = &grad.values[r * nc..(r + 1) * nc];
            if contiguous {
                let start = weights.index(i as usize, grad.cols[0] as usize);
                buffer.read_into(start, &mut s.w);
                self.weight_m.read_into(start, &mut s.m);
                self.weight_v.read_into(start, &mut s.v);
                adam_update_unchecked(&mut s.w, g, &mut s.m, &mut s.v, &step, lanes);
                buffer.write_from(start, &s.w);
                self.weight_m.write_from(start, &s.m);
                self.weight_v.write_from(start, &s.v);
            } else {
                s.positions.clear();
                s.positions.extend(
                    grad.cols
                        .iter()
                        .map(|&j| weights.index(i as usize, j as usize)),
                );
                buffer.gather(&s.positions, &mut s.w);
                self.weight_m.gather(&s.positions, &mut s.m);
                self.weight_v.gather(&s.positions, &mut s.v);
                adam_update_unchecked(&mut s.w, g, &mut s.m, &mut s.v, &step, lanes);
                buffer.scatter(&s.positions, &s.w);
                self.weight_m.scatter(&s.positions, &s.m);
                self.weight_v.scatter(&s.positions, &s.v);
            }
        }

        s.positions.clear();
        s.positions.extend(grad.rows.iter().map(|&i| i as usize));
        s.w.resize(nr, 0.0);
        s.m.resize(nr, 0.0);
        s.v.resize(nr, 0.0);
        let bias = weights.bias();
        bias.gather(&s.positions, &mut s.w);
        self.bias_m.gather(&s.positions, &mut s.m);
        self.bias_v.gather(&s.positions, &mut s.v);
        adam_update_unchecked(&mut s.w, &grad.bias, &mut s.m, &mut s.v, &step, lanes);
        bias.scatter(&s.positions, &s.w);
        self.bias_m.scatter(&s.positions, &s.m);
        self.bias_v.scatter(&s.positions, &s.v);
        Ok(())
    }

    /// Advance the counter, then apply: one full optimizer step for a
    /// single gradient block.
    pub fn step_sparse(
        &self,
        weights: &LayerWeights,
        grad: &GradBlock,
        lanes: LaneConfig,
        scratch: &mut AdamScratch,
    ) -> Result<(), OptimError> {
        self.advance();
        self.apply_sparse(weights, grad, lanes, scratch)
    }
}
