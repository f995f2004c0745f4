//! Shared parameter storage.
//!
//! Parameters live in relaxed atomic cells so that many threads can read
//! and write them without locks (HOGWILD updates). A read-modify-write of a
//! block is not atomic as a whole: concurrent writers may lose each other's
//! updates, which is the accepted contract for asynchronous sparse SGD.
//! Relaxed loads and stores compile to plain moves on mainstream targets.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU16, AtomicU32, Ordering::Relaxed};

use crate::quant::{Bf16, Rounding, WeightStorage};

enum Cells {
    F32(Box<[AtomicU32]>),
    Bf16(Box<[AtomicU16]>),
}

/// Flat `f32` buffer, physically stored as FP32 or BF16.
pub struct ParamBuffer {
    cells: Cells,
    rounding: Rounding,
}

impl ParamBuffer {
    pub fn zeros(len: usize, storage: WeightStorage) -> Self {
        let cells = match storage {
            WeightStorage::F32 => Cells::F32((0..len).map(|_| AtomicU32::new(0)).collect()),
            WeightStorage::Bf16 => Cells::Bf16((0..len).map(|_| AtomicU16::new(0)).collect()),
        };
        Self {
            cells,
            rounding: Rounding::Truncate,
        }
    }

    pub fn from_slice(values: &[f32], storage: WeightStorage, rounding: Rounding) -> Self {
        let cells = match storage {
            WeightStorage::F32 => {
                Cells::F32(values.iter().map(|v| AtomicU32::new(v.to_bits())).collect())
            }
            WeightStorage::Bf16 => Cells::Bf16(
                values
                    .iter()
                    .map(|&v| AtomicU16::new(Bf16::from_f32_with(v, rounding).to_bits()))
                    .collect(),
            ),
        };
        Self { cells, rounding }
    }

    pub fn len(&self) -> usize {
        match &self.cells {
            Cells::F32(c) => c.len(),
            Cells::Bf16(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn storage(&self) -> WeightStorage {
        match self.cells {
            Cells::F32(_) => WeightStorage::F32,
            Cells::Bf16(_) => WeightStorage::Bf16,
        }
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    #[inline]
    pub fn get(&self, i: usize) -> f32 {
        match &self.cells {
            Cells::F32(c) => f32::from_bits(c[i].load(Relaxed)),
            Cells::Bf16(c) => Bf16::from_bits(c[i].load(Relaxed)).to_f32(),
        }
    }

    #[inline]
    pub fn set(&self, i: usize, v: f32) {
        match &self.cells {
            Cells::F32(c) => c[i].store(v.to_bits(), Relaxed),
            Cells::Bf16(c) => c[i].store(Bf16::from_f32_with(v, self.rounding).to_bits(), Relaxed),
        }
    }

    /// Copy `out.len()` consecutive values starting at `start`.
    #[inline]
    pub fn read_into(&self, start: usize, out: &mut [f32]) {
        let end = start + out.len();
        match &self.cells {
            Cells::F32(c) => {
                for (o, cell) in out.iter_mut().zip(&c[start..end]) {
                    *o = f32::from_bits(cell.load(Relaxed));
                }
            }
            Cells::Bf16(c) => {
                for (o, cell) in out.iter_mut().zip(&c[start..end]) {
                    *o = Bf16::from_bits(cell.load(Relaxed)).to_f32();
                }
            }
        }
    }

    #[inline]
    pub fn write_from(&self, start: usize, src: &[f32]) {
        match &self.cells {
            Cells::F32(c) => {
                for (cell, v) in c[start..start + src.len()].iter().zip(src) {
                    cell.store(v.to_bits(), Relaxed);
                }
            }
            Cells::Bf16(c) => {
                for (cell, &v) in c[start..start + src.len()].iter().zip(src) {
                    cell.store(Bf16::from_f32_with(v, self.rounding).to_bits(), Relaxed);
                }
            }
        }
    }

    /// Gather values at arbitrary positions (`out[k] = self[positions[k]]`).
    #[inline]
    pub fn gather(&self, positions: &[usize], out: &mut [f32]) {
        debug_assert_eq!(positions.len(), out.len());
        for (o, &p) in out.iter_mut().zip(positions) {
            *o = self.get(p);
        }
    }

    #[inline]
    pub fn scatter(&self, positions: &[usize], src: &[f32]) {
        debug_assert_eq!(positions.len(), src.len());
        for (&p, &v) in positions.iter().zip(src) {
            self.set(p, v);
        }
    }

    pub fn to_vec(&self) -> Vec<f32> {
        let mut out = alloc::vec![0.0; self.len()];
        self.read_into(0, &mut out);
        out
    }

    /// Same values in different physical storage.
    pub fn converted(&self, storage: WeightStorage, rounding: Rounding) -> Self {
        Self::from_slice(&self.to_vec(), storage, rounding)
    }
}

impl Clone for ParamBuffer {
    fn clone(&self) -> Self {
        let cells = match &self.cells {
            Cells::F32(c) => Cells::F32(c.iter().map(|a| AtomicU32::new(a.load(Relaxed))).collect()),
            Cells::Bf16(c) => {
                Cells::Bf16(c.iter().map(|a| AtomicU16::new(a.load(Relaxed))).collect())
            }
        };
        Self {
            cells,
            rounding: self.rounding,
        }
    }
}

impl core::fmt::Debug for ParamBuffer {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ParamBuffer")
            .field("len", &self.len())
            .field("storage", &self.storage())
            .finish()
    }
}

impl PartialEq for ParamBuffer {
    /// Bitwise comparison of the stored values.
    fn eq(&self, other: &Self) -> bool {
        self.storage() == other.storage()
            && self.len() == other.len()
            && (0..self.len()).all(|i| self.get(i).to_bits() == other.get(i).to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_storage_is_exact() {
        let vals = [1.0f32, -2.5, 1.0 + f32::EPSILON, 3.1e-9];
        let p = ParamBuffer::from_slice(&vals, WeightStorage::F32, Rounding::Truncate);
        assert_eq!(p.to_vec(), vals);
        p.set(2, 7.0);
        assert_eq!(p.get(2), 7.0);
    }

    #[test]
    fn bf16_storage_truncates_on_store() {
        let p = ParamBuffer::zeros(4, WeightStorage::Bf16);
        p.write_from(1, &[1.0 + 2f32.powi(-8), -3.0]);
        assert_eq!(p.to_vec(), [0.0, 1.0, -3.0, 0.0]);
    }

    #[test]
    fn gather_scatter() {
        let p = ParamBuffer::from_slice(&[0.0, 1.0, 2.0, 3.0], WeightStorage::F32, Rounding::Truncate);
        let mut out = [0.0; 2];
        p.gather(&[3, 1], &mut out);
        assert_eq!(out, [3.0, 1.0]);
        p.scatter(&[0, 2], &[9.0, 8.0]);
        assert_eq!(p.to_vec(), [9.0, 1.0, 8.0, 3.0]);
        assert_eq!(p.clone(), p);
    }
}
