//! Signed random projections with sparse sign vectors.
//!
//! Bit `j` of the `K * L` bits is the sign of `<r_j, x>`, where `r_j` has
//! entries `+1` or `-1` with probability 1/6 each and `0` otherwise; `r_j`
//! is drawn from a stream keyed by `(seed, j)`. Bit value 1 means the
//! projection is `>= 0`. A table's code is its `K` bits, first bit most
//! significant.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{HashFamilyParams, HashScratch, LshInput};
use crate::kernels::{axpy_unchecked, LaneConfig};
use crate::rng;

#[derive(Debug, Clone)]
pub struct SimHash {
    k: usize,
    bits: usize,
    /// Coordinate-major: `signs[i * bits + j]` is entry `i` of `r_j`.
    signs: Vec<f32>,
}

impl SimHash {
    pub fn new(params: &HashFamilyParams) -> Self {
        let bits = (params.k * params.l) as usize;
        let d = params.input_dim;
        let mut signs = vec![0.0f32; d * bits];
        for j in 0..bits {
            let mut rng = rng::stream(params.seed, &[0x5141, j as u64]);
            for i in 0..d {
                signs[i * bits + j] = match rng.gen_range(0..6u8) {
                    0 => 1.0,
                    1 => -1.0,
                    _ => 0.0,
                };
            }
        }
        Self {
            k: params.k as usize,
            bits,
            signs,
        }
    }

    /// Entry `i` of projection vector `j`.
    pub fn sign(&self, j: usize, i: usize) -> f32 {
        self.signs[i * self.bits + j]
    }

    pub fn projections(&self, x: LshInput<'_>, lanes: LaneConfig, out: &mut Vec<f32>) {
        out.clear();
        out.resize(self.bits, 0.0);
        x.for_each_nonzero(|i, v| {
            axpy_unchecked(v, &self.signs[i * self.bits..(i + 1) * self.bits], out, lanes);
        });
    }

    pub(super) fn codes_into(
        &self,
        x: LshInput<'_>,
        lanes: LaneConfig,
        scratch: &mut HashScratch,
        out: &mut [u32],
    ) {
        self.projections(x, lanes, &mut scratch.values);
        for (t, code) in out.iter_mut().enumerate() {
            *code = scratch.values[t * self.k..(t + 1) * self.k]
                .iter()
                .fold(0u32, |c, &p| (c << 1) | (p >= 0.0) as u32);
        }
    }
}
