//! Hot inner loops in two flavours: a plain scalar loop and a lane-parallel
//! loop that processes `lane_width` elements per step with one accumulator
//! per lane, the shape a 512-bit SIMD register gives. Trailing elements that
//! do not fill a lane group go through the scalar path.
//!
//! Lane groups are fixed-size arrays, which the compiler lowers to vector
//! instructions on targets that have them.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("matrix buffer holds {len} values, expected {rows}x{cols}")]
    BadShape { len: usize, rows: usize, cols: usize },
    #[error("kernel needs a {expected:?} matrix, got {found:?}")]
    Layout {
        expected: StorageOrder,
        found: StorageOrder,
    },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("lane width {0} is not a power of two in [1, 64]")]
    LaneWidth(usize),
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneConfig {
    lane_width: usize,
    pub enabled: bool,
}

impl LaneConfig {
    /// 16 lanes of 32-bit values fill a 512-bit register.
    pub const DEFAULT_WIDTH: usize = 16;

    pub fn new(lane_width: usize, enabled: bool) -> Result<Self, KernelError> {
        if !lane_width.is_power_of_two() || lane_width > 64 {
            return Err(KernelError::LaneWidth(lane_width));
        }
        Ok(Self {
            lane_width,
            enabled,
        })
    }

    pub const fn scalar() -> Self {
        Self {
            lane_width: Self::DEFAULT_WIDTH,
            enabled: false,
        }
    }

    pub fn lane_width(&self) -> usize {
        self.lane_width
    }

    pub fn with_enabled(self, enabled: bool) -> Self {
        Self { enabled, ..self }
    }
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            lane_width: Self::DEFAULT_WIDTH,
            enabled: true,
        }
    }
}

/// Dispatch a const-generic lane kernel on the configured width.
macro_rules! with_lanes {
    ($cfg:expr, $f:ident, $($arg:expr),*) => {
        match $cfg.lane_width {
            64 => $f::<64>($($arg),*),
            32 => $f::<32>($($arg),*),
            16 => $f::<16>($($arg),*),
            8 => $f::<8>($($arg),*),
            4 => $f::<4>($($arg),*),
            2 => $f::<2>($($arg),*),
            _ => $f::<1>($($arg),*),
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageOrder {
    /// Each neuron's weight vector is contiguous: `w[i, j] = buf[i * m + j]`.
    RowMajor,
    /// Each input coordinate is contiguous across neurons: `w[i, j] = buf[j * n + i]`.
    ColMajor,
}

impl StorageOrder {
    pub fn flipped(self) -> Self {
        match self {
            StorageOrder::RowMajor => StorageOrder::ColMajor,
            StorageOrder::ColMajor => StorageOrder::RowMajor,
        }
    }

    #[inline]
    pub fn index(self, rows: usize, cols: usize, i: usize, j: usize) -> usize {
        match self {
            StorageOrder::RowMajor => i * cols + j,
            StorageOrder::ColMajor => j * rows + i,
        }
    }
}

/// Borrowed `rows x cols` matrix over a flat buffer with an explicit order.
#[derive(Debug, Clone, Copy)]
pub struct MatrixRef<'a> {
    data: &'a [f32],
    rows: usize,
    cols: usize,
    order: StorageOrder,
}

impl<'a> MatrixRef<'a> {
    pub fn new(
        data: &'a [f32],
        rows: usize,
        cols: usize,
        order: StorageOrder,
    ) -> Result<Self, KernelError> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(KernelError::BadShape {
                len: data.len(),
                rows,
                cols,
            });
        }
        Ok(Self {
            data,
            rows,
            cols,
            order,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn order(&self) -> StorageOrder {
        self.order
    }

    pub fn data(&self) -> &'a [f32] {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[self.order.index(self.rows, self.cols, i, j)]
    }

    /// The same buffer read as the transpose: a column-major `W` is a
    /// row-major `W^T` and vice versa.
    pub fn transpose(self) -> MatrixRef<'a> {
        MatrixRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            order: self.order.flipped(),
        }
    }

    /// Physically re-lay the same logical matrix in `order`.
    pub fn to_order(&self, order: StorageOrder) -> Vec<f32> {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[order.index(self.rows, self.cols, i, j)] = self.get(i, j);
            }
        }
        out
    }

    /// Row `i` of a row-major matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &'a [f32] {
        debug_assert_eq!(self.order, StorageOrder::RowMajor);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` of a column-major matrix.
    #[inline]
    pub fn col(&self, j: usize) -> &'a [f32] {
        debug_assert_eq!(self.order, StorageOrder::ColMajor);
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

#[inline]
fn reduce_lanes<const W: usize>(acc: [f32; W]) -> f32 {
    // Pairwise tree, like a horizontal-add sequence.
    let mut acc = acc;
    let mut width = W;
    while width > 1 {
        width /= 2;
        for k in 0..width {
            acc[k] += acc[k + width];
        }
    }
    acc[0]
}

#[inline]
fn dot_scalar(x: &[f32], w: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for (a, b) in x.iter().zip(w) {
        s += a * b;
    }
    s
}

// Kept out of line: inlined into the width dispatch, the accumulators
// spill to the stack.
#[inline(never)]
fn dot_lanes<const W: usize>(x: &[f32], w: &[f32]) -> f32 {
    let xc = x.chunks_exact(W);
    let wc = w.chunks_exact(W);
    let tail = dot_scalar(xc.remainder(), wc.remainder());
    let mut acc = [0.0f32; W];
    for (a, b) in xc.zip(wc) {
        let a: &[f32; W] = a.try_into().unwrap();
        let b: &[f32; W] = b.try_into().unwrap();
        for k in 0..W {
            acc[k] += a[k] * b[k];
        }
    }
    reduce_lanes(acc) + tail
}

#[inline]
pub(crate) fn dot_unchecked(x: &[f32], w: &[f32], cfg: LaneConfig) -> f32 {
    if cfg.enabled {
        with_lanes!(cfg, dot_lanes, x, w)
    } else {
        dot_scalar(x, w)
    }
}

/// Inner product of two equal-length dense vectors.
pub fn dot_dense(x: &[f32], w: &[f32], cfg: LaneConfig) -> Result<f32, KernelError> {
    if x.len() != w.len() {
        return Err(KernelError::LengthMismatch {
            left: x.len(),
            right: w.len(),
        });
    }
    Ok(dot_unchecked(x, w, cfg))
}

#[inline]
fn axpy_scalar(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn axpy_lanes<const W: usize>(alpha: f32, x: &[f32], y: &mut [f32]) {
    let split = x.len() - x.len() % W;
    let (xh, xt) = x.split_at(split);
    let (yh, yt) = y.split_at_mut(split);
    // Broadcast alpha into every lane.
    let a = [alpha; W];
    for (yc, xc) in yh.chunks_exact_mut(W).zip(xh.chunks_exact(W)) {
        for k in 0..W {
            yc[k] += a[k] * xc[k];
        }
    }
    axpy_scalar(alpha, xt, yt);
}

#[inline]
pub(crate) fn axpy_unchecked(alpha: f32, x: &[f32], y: &mut [f32], cfg: LaneConfig) {
    if cfg.enabled {
        with_lanes!(cfg, axpy_lanes, alpha, x, y)
    } else {
        axpy_scalar(alpha, x, y)
    }
}

/// `y += alpha * x`, the broadcast-multiply-accumulate step of the
/// sparse-input product.
pub fn axpy(alpha: f32, x: &[f32], y: &mut [f32], cfg: LaneConfig) -> Result<(), KernelError> {
    if x.len() != y.len() {
        return Err(KernelError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    axpy_unchecked(alpha, x, y, cfg);
    Ok(())
}

/// `y_i = <w_i, x>` for every `i` in `active`, in the order given.
///
/// Needs a dense `x` and a row-major `w`, so every inner product runs over
/// two contiguous vectors.
pub fn matvec_dense_x(
    x: &[f32],
    w: MatrixRef<'_>,
    active: &[u32],
    cfg: LaneConfig,
) -> Result<Vec<(u32, f32)>, KernelError> {
    if w.order != StorageOrder::RowMajor {
        return Err(KernelError::Layout {
            expected: StorageOrder::RowMajor,
            found: w.order,
        });
    }
    if x.len() != w.cols {
        return Err(KernelError::LengthMismatch {
            left: x.len(),
            right: w.cols,
        });
    }
    if let Some(&i) = active.iter().find(|&&i| i as usize >= w.rows) {
        return Err(KernelError::IndexOutOfRange {
            index: i as usize,
            dim: w.rows,
        });
    }
    Ok(active
        .iter()
        .map(|&i| (i, dot_unchecked(x, w.row(i as usize), cfg)))
        .collect())
}

/// Dense `y = W x` for a sparse `x` given as parallel index/value arrays.
///
/// Needs a column-major `w`: each non-zero `(j, v)` scales the contiguous
/// column `j` into the accumulator.
pub fn matvec_sparse_x(
    x_indices: &[u32],
    x_values: &[f32],
    w: MatrixRef<'_>,
    cfg: LaneConfig,
) -> Result<Vec<f32>, KernelError> {
    if w.order != StorageOrder::ColMajor {
        return Err(KernelError::Layout {
            expected: StorageOrder::ColMajor,
            found: w.order,
        });
    }
    if x_indices.len() != x_values.len() {
        return Err(KernelError::LengthMismatch {
            left: x_indices.len(),
            right: x_values.len(),
        });
    }
    if let Some(&j) = x_indices.iter().find(|&&j| j as usize >= w.cols) {
        return Err(KernelError::IndexOutOfRange {
            index: j as usize,
            dim: w.cols,
        });
    }
    let mut y = vec![0.0f32; w.rows];
    for (&j, &v) in x_indices.iter().zip(x_values) {
        axpy_unchecked(v, w.col(j as usize), &mut y, cfg);
    }
    Ok(y)
}

/// One ADAM step's scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamStep {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub bias_correction: bool,
    /// Step counter, starting at 1.
    pub t: u64,
}

/// Per-step ADAM scalars with the bias corrections folded in.
#[derive(Debug, Clone, Copy)]
pub struct AdamCoeffs {
    lr: f32,
    b1: f32,
    one_minus_b1: f32,
    b2: f32,
    one_minus_b2: f32,
    c1: f32,
    c2: f32,
    eps: f32,
}

impl AdamStep {
    pub fn coeffs(&self) -> AdamCoeffs {
        let (c1, c2) = if self.bias_correction {
            let t = self.t.max(1).min(i32::MAX as u64) as i32;
            (
                (1.0 / (1.0 - math::powi(self.beta1 as f64, t))) as f32,
                (1.0 / (1.0 - math::powi(self.beta2 as f64, t))) as f32,
            )
        } else {
            (1.0, 1.0)
        };
        AdamCoeffs {
            lr: self.lr,
            b1: self.beta1,
            one_minus_b1: 1.0 - self.beta1,
            b2: self.beta2,
            one_minus_b2: 1.0 - self.beta2,
            c1,
            c2,
            eps: self.eps,
        }
    }
}

#[inline(always)]
fn adam_one(c: &AdamCoeffs, w: &mut f32, g: f32, m: &mut f32, v: &mut f32) {
    *m = c.b1 * *m + c.one_minus_b1 * g;
    *v = c.b2 * *v + c.one_minus_b2 * (g * g);
    let m_hat = *m * c.c1;
    let v_hat = *v * c.c2;
    *w -= c.lr * m_hat / (math::sqrtf(v_hat) + c.eps);
}

#[inline]
fn adam_scalar(c: &AdamCoeffs, w: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]) {
    for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        adam_one(c, wi, *gi, mi, vi);
    }
}

#[inline(always)]
fn adam_chunk<const W: usize>(
    c: &AdamCoeffs,
    w: &mut [f32; W],
    g: &[f32; W],
    m: &mut [f32; W],
    v: &mut [f32; W],
) {
    for k in 0..W {
        adam_one(c, &mut w[k], g[k], &mut m[k], &mut v[k]);
    }
}

/// Full chunks of `W`, then the tail in chunks of 4, then scalar. A plain
/// loop over a tail known to be shorter than `W` is left unvectorized.
#[inline]
fn adam_lanes<const W: usize>(
    c: &AdamCoeffs,
    w: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
) {
    let n = w.len();
    if g.len() != n || m.len() != n || v.len() != n {
        return adam_scalar(c, w, g, m, v);
    }
    let wide = n - n % W;
    let narrow = n - n % 4;
    let mut start = 0;
    while start < wide {
        adam_at::<W>(c, w, g, m, v, start);
        start += W;
    }
    while start < narrow {
        adam_at::<4>(c, w, g, m, v, start);
        start += 4;
    }
    adam_scalar(c, &mut w[start..], &g[start..], &mut m[start..], &mut v[start..]);
}

#[inline(always)]
fn adam_at<const W: usize>(
    c: &AdamCoeffs,
    w: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    start: usize,
) {
    let r = start..start + W;
    adam_chunk::<W>(
        c,
        (&mut w[r.clone()]).try_into().unwrap(),
        (&g[r.clone()]).try_into().unwrap(),
        (&mut m[r.clone()]).try_into().unwrap(),
        (&mut v[r]).try_into().unwrap(),
    );
}

/// Elementwise ADAM over flat, equal-length buffers: weights `w`,
/// gradient `g`, first moment `m` and second moment `v`.
pub fn adam_update(
    w: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    step: &AdamStep,
    cfg: LaneConfig,
) -> Result<(), KernelError> {
    for len in [g.len(), m.len(), v.len()] {
        if len != w.len() {
            return Err(KernelError::LengthMismatch {
                left: w.len(),
                right: len,
            });
        }
    }
    adam_update_unchecked(w, g, m, v, &step.coeffs(), cfg);
    Ok(())
}

#[inline]
pub(crate) fn adam_update_unchecked(
    w: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    c: &AdamCoeffs,
    cfg: LaneConfig,
) {
    if cfg.enabled {
        with_lanes!(cfg, adam_lanes, c, w, g, m, v)
    } else {
        adam_scalar(c, w, g, m, v)
    }
}

fn argmax_scalar(values: &[f32]) -> (usize, f32) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 || (best.1.is_nan() && !v.is_nan()) {
            best = (i, v);
        }
    }
    best
}

/// Each lane keeps its maximum and the first chunk where it occurred.
fn argmax_lanes<const W: usize>(values: &[f32]) -> (usize, f32) {
    if values.len() < W {
        return argmax_scalar(values);
    }
    let chunks = values.chunks_exact(W);
    let tail = chunks.remainder();
    let mut best = [f32::NEG_INFINITY; W];
    let mut at = [0u32; W];
    for (n, c) in chunks.enumerate() {
        let c: &[f32; W] = c.try_into().unwrap();
        for k in 0..W {
            let better = c[k] > best[k];
            best[k] = if better { c[k] } else { best[k] };
            at[k] = if better { n as u32 } else { at[k] };
        }
    }
    let mut out = (usize::MAX, f32::NEG_INFINITY);
    for k in 0..W {
        let pos = at[k] as usize * W + k;
        if best[k] > out.1 || (best[k] == out.1 && pos < out.0) {
            out = (pos, best[k]);
        }
    }
    let base = values.len() - tail.len();
    for (i, &v) in tail.iter().enumerate() {
        if v > out.1 {
            out = (base + i, v);
        }
    }
    // Only NaN and -inf values: let the scan decide.
    if out.1 == f32::NEG_INFINITY {
        return argmax_scalar(values);
    }
    out
}

/// Position and value of the maximum; ties go to the lowest position.
pub fn bin_argmax(values: &[f32], cfg: LaneConfig) -> Result<(usize, f32), KernelError> {
    if values.is_empty() {
        return Err(KernelError::Empty);
    }
    Ok(if cfg.enabled {
        with_lanes!(cfg, argmax_lanes, values)
    } else {
        argmax_scalar(values)
    })
}
