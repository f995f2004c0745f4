//! Locality-sensitive hashing for active-neuron selection.
//!
//! Two families are provided: densified winner-take-all ([`dwta`]) for
//! sparse non-negative data, and signed random projections ([`simhash`]).
//! [`LshTables`] keeps `L` tables of `2^K` buckets holding neuron ids.

pub mod dwta;
pub mod simhash;
mod tables;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::kernels::LaneConfig;
pub use dwta::DwtaHash;
pub use simhash::SimHash;
pub use tables::{LshTables, QueryScratch};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LshError {
    #[error("invalid hash parameters: {0}")]
    Params(&'static str),
    #[error("input dimension {found} does not match hash input_dim {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("input index {index} out of range for input_dim {dim}")]
    IndexOutOfRange { index: u32, dim: usize },
    #[error("neuron {0} is out of range for these tables")]
    NeuronOutOfRange(u32),
    #[error("neuron {0} is already in the tables")]
    AlreadyPresent(u32),
    #[error("neuron {neuron} not found in table {table} bucket {bucket}; stale weight vector?")]
    NotFound { neuron: u32, table: usize, bucket: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashFamily {
    Dwta,
    SimHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashFamilyParams {
    pub family: HashFamily,
    /// Bits (SimHash) or winner bins (DWTA) per table.
    pub k: u32,
    /// Number of tables.
    pub l: u32,
    pub input_dim: usize,
    pub seed: u64,
    /// DWTA slots per bin; a power of two.
    pub bin_size: u32,
    /// DWTA probes for an empty bin before falling back to slot 0.
    pub densify_cap: u32,
}

impl HashFamilyParams {
    pub const DEFAULT_BIN_SIZE: u32 = 8;
    pub const DEFAULT_DENSIFY_CAP: u32 = 100;

    pub fn dwta(k: u32, l: u32, input_dim: usize, seed: u64) -> Self {
        Self {
            family: HashFamily::Dwta,
            k,
            l,
            input_dim,
            seed,
            bin_size: Self::DEFAULT_BIN_SIZE,
            densify_cap: Self::DEFAULT_DENSIFY_CAP,
        }
    }

    pub fn simhash(k: u32, l: u32, input_dim: usize, seed: u64) -> Self {
        Self {
            family: HashFamily::SimHash,
            ..Self::dwta(k, l, input_dim, seed)
        }
    }

    pub fn num_buckets(&self) -> usize {
        1usize << self.k
    }

    pub fn validate(&self) -> Result<(), LshError> {
        if self.k == 0 || self.k > 30 {
            return Err(LshError::Params("K must be in [1, 30]"));
        }
        if self.l == 0 {
            return Err(LshError::Params("L must be positive"));
        }
        if self.input_dim == 0 {
            return Err(LshError::Params("input_dim must be positive"));
        }
        if self.family == HashFamily::Dwta {
            if !self.bin_size.is_power_of_two() {
                return Err(LshError::Params("DWTA bin size must be a power of two"));
            }
            if self.k * self.bin_size.trailing_zeros() > 30 {
                return Err(LshError::Params("DWTA code exceeds 30 bits (K * log2(S))"));
            }
            if self.densify_cap == 0 {
                return Err(LshError::Params("densification cap must be positive"));
            }
        }
        Ok(())
    }
}

/// A vector to hash, sparse or dense.
#[derive(Debug, Clone, Copy)]
pub enum LshInput<'a> {
    Sparse { indices: &'a [u32], values: &'a [f32] },
    Dense(&'a [f32]),
}

impl LshInput<'_> {
    pub(crate) fn check(&self, dim: usize) -> Result<(), LshError> {
        match *self {
            LshInput::Dense(x) if x.len() != dim => Err(LshError::Dimension {
                expected: dim,
                found: x.len(),
            }),
            LshInput::Dense(_) => Ok(()),
            LshInput::Sparse { indices, values } => {
                if indices.len() != values.len() {
                    return Err(LshError::Dimension {
                        expected: indices.len(),
                        found: values.len(),
                    });
                }
                match indices.iter().find(|&&i| i as usize >= dim) {
                    Some(&index) => Err(LshError::IndexOutOfRange { index, dim }),
                    None => Ok(()),
                }
            }
        }
    }

    /// Call `f(index, value)` for every non-zero coordinate, in index order.
    #[inline]
    pub(crate) fn for_each_nonzero(&self, mut f: impl FnMut(usize, f32)) {
        match *self {
            LshInput::Dense(x) => {
                for (i, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        f(i, v);
                    }
                }
            }
            LshInput::Sparse { indices, values } => {
                for (&i, &v) in indices.iter().zip(values) {
                    if v != 0.0 {
                        f(i as usize, v);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Family {
    Dwta(DwtaHash),
    SimHash(SimHash),
}

/// A built hash family: `L` codes in `[0, 2^K)` per input.
#[derive(Debug, Clone)]
pub struct HashFunction {
    params: HashFamilyParams,
    family: Family,
    lanes: LaneConfig,
}

/// Per-thread buffers for code computation.
#[derive(Debug, Clone, Default)]
pub struct HashScratch {
    pub(crate) values: Vec<f32>,
    pub(crate) slots: Vec<u32>,
    pub(crate) bin: Vec<f32>,
}

impl HashFunction {
    pub fn new(params: HashFamilyParams, lanes: LaneConfig) -> Result<Self, LshError> {
        params.validate()?;
        let family = match params.family {
            HashFamily::Dwta => Family::Dwta(DwtaHash::new(&params)),
            HashFamily::SimHash => Family::SimHash(SimHash::new(&params)),
        };
        Ok(Self {
            params,
            family,
            lanes,
        })
    }

    pub fn params(&self) -> &HashFamilyParams {
        &self.params
    }

    pub fn lanes(&self) -> LaneConfig {
        self.lanes
    }

    pub fn set_lanes(&mut self, lanes: LaneConfig) {
        self.lanes = lanes;
    }

    pub fn num_tables(&self) -> usize {
        self.params.l as usize
    }

    pub fn as_dwta(&self) -> Option<&DwtaHash> {
        match &self.family {
            Family::Dwta(h) => Some(h),
            Family::SimHash(_) => None,
        }
    }

    pub fn as_simhash(&self) -> Option<&SimHash> {
        match &self.family {
            Family::SimHash(h) => Some(h),
            Family::Dwta(_) => None,
        }
    }

    /// Write the `L` bucket codes of `x` into `out`.
    pub fn codes_into(
        &self,
        x: LshInput<'_>,
        scratch: &mut HashScratch,
        out: &mut [u32],
    ) -> Result<(), LshError> {
        x.check(self.params.input_dim)?;
        assert_eq!(out.len(), self.num_tables());
        match &self.family {
            Family::Dwta(h) => h.codes_into(x, self.lanes, scratch, out),
            Family::SimHash(h) => h.codes_into(x, self.lanes, scratch, out),
        }
        Ok(())
    }

    pub fn codes(&self, x: LshInput<'_>) -> Result<Vec<u32>, LshError> {
        let mut out = vec![0; self.num_tables()];
        self.codes_into(x, &mut HashScratch::default(), &mut out)?;
        Ok(out)
    }
}

/// One-shot code computation. Builds the hash family from `params`; keep a
/// [`HashFunction`] around when hashing many vectors.
pub fn compute_codes(params: &HashFamilyParams, x: LshInput<'_>) -> Result<Vec<u32>, LshError> {
    HashFunction::new(*params, LaneConfig::default())?.codes(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(HashFamilyParams::dwta(6, 400, 128, 1).validate().is_ok());
        assert!(HashFamilyParams::simhash(9, 50, 128, 1).validate().is_ok());
        assert!(HashFamilyParams::dwta(0, 4, 128, 1).validate().is_err());
        assert!(HashFamilyParams::dwta(4, 0, 128, 1).validate().is_err());
        assert!(HashFamilyParams::simhash(31, 4, 128, 1).validate().is_err());
        // 11 bins * 3 bits = 33 > 30.
        assert!(HashFamilyParams::dwta(11, 4, 128, 1).validate().is_err());
        let mut p = HashFamilyParams::dwta(4, 4, 128, 1);
        p.bin_size = 6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn dimension_checks() {
        let p = HashFamilyParams::simhash(4, 3, 8, 1);
        assert!(matches!(
            compute_codes(&p, LshInput::Dense(&[1.0; 7])),
            Err(LshError::Dimension { expected: 8, found: 7 })
        ));
        assert!(matches!(
            compute_codes(&p, LshInput::Sparse { indices: &[8], values: &[1.0] }),
            Err(LshError::IndexOutOfRange { index: 8, .. })
        ));
        let codes = compute_codes(&p, LshInput::Dense(&[1.0; 8])).unwrap();
        assert_eq!(codes.len(), 3);
        assert!(codes.iter().all(|&c| c < 16));
    }
}
