//! Densified winner-take-all hashing.
//!
//! Each of the `K * L` bins holds `S` slots, and every slot is bound to one
//! input coordinate by a seeded random map (concatenated permutations of the
//! coordinates). A bin's winner is the slot whose coordinate has the largest
//! non-zero value, lowest slot on ties. A bin that sees no non-zero borrows
//! the winner of bin `(b + a * STRIDE) mod K` of the same table for
//! `a = 1..=cap`, falling back to slot 0. The `K` winners of a table are
//! packed `log2(S)` bits each and folded into `[0, 2^K)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{HashFamilyParams, HashScratch, LshInput};
use crate::kernels::{bin_argmax, LaneConfig};
use crate::rng;

/// Odd prime probe stride for densification.
pub const DENSIFY_STRIDE: u64 = 1_000_003;

const EMPTY: u32 = u32::MAX;
const FOLD_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

/// Fold a packed winner code into `[0, 2^k)` (multiply-shift).
#[inline]
pub fn fold_code(packed: u32, k: u32) -> u32 {
    ((packed as u64).wrapping_mul(FOLD_MULTIPLIER) >> (64 - k)) as u32
}

#[derive(Debug, Clone)]
pub struct DwtaHash {
    k: usize,
    l: usize,
    bin_size: usize,
    log_bin: u32,
    cap: u32,
    /// Bin-major: `slot_map[bin * S + slot]` is the coordinate in that slot.
    slot_map: Vec<u32>,
    /// Inverse map in CSR form: coordinate -> positions `bin * S + slot`.
    feat_offsets: Vec<u32>,
    feat_positions: Vec<u32>,
}

impl DwtaHash {
    pub fn new(params: &HashFamilyParams) -> Self {
        let (k, l, s, d) = (
            params.k as usize,
            params.l as usize,
            params.bin_size as usize,
            params.input_dim,
        );
        let total = k * l * s;
        let mut rng = rng::stream(params.seed, &[0xD37A]);
        let mut perm: Vec<u32> = (0..d as u32).collect();
        let mut slot_map = Vec::with_capacity(total);
        while slot_map.len() < total {
            let need = (total - slot_map.len()).min(d);
            let (head, _) = perm.partial_shuffle(&mut rng, need);
            slot_map.extend_from_slice(head);
        }

        let mut counts = vec![0u32; d + 1];
        for &f in &slot_map {
            counts[f as usize + 1] += 1;
        }
        for i in 0..d {
            counts[i + 1] += counts[i];
        }
        let feat_offsets = counts;
        let mut fill = feat_offsets.clone();
        let mut feat_positions = vec![0u32; total];
        for (pos, &f) in slot_map.iter().enumerate() {
            let at = &mut fill[f as usize];
            feat_positions[*at as usize] = pos as u32;
            *at += 1;
        }

        Self {
            k,
            l,
            bin_size: s,
            log_bin: params.bin_size.trailing_zeros(),
            cap: params.densify_cap,
            slot_map,
            feat_offsets,
            feat_positions,
        }
    }

    /// Coordinate bound to `slot` of global bin `bin` (`bin = table * K + b`).
    pub fn slot_feature(&self, bin: usize, slot: usize) -> u32 {
        self.slot_map[bin * self.bin_size + slot]
    }

    /// `(global bin, slot)` pairs that coordinate `feature` is bound to.
    pub fn feature_slots(&self, feature: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (a, b) = (
            self.feat_offsets[feature] as usize,
            self.feat_offsets[feature + 1] as usize,
        );
        self.feat_positions[a..b]
            .iter()
            .map(move |&p| (p as usize / self.bin_size, p as usize % self.bin_size))
    }

    pub(super) fn codes_into(
        &self,
        x: LshInput<'_>,
        lanes: LaneConfig,
        scratch: &mut HashScratch,
        out: &mut [u32],
    ) {
        let bins = self.k * self.l;
        let slots = &mut scratch.slots;
        slots.clear();
        slots.resize(bins, EMPTY);
        match x {
            LshInput::Dense(values) => {
                // Gather each bin's slot values and take the vector max.
                let bin = &mut scratch.bin;
                bin.clear();
                bin.resize(self.bin_size, 0.0);
                for (b, winner) in slots.iter_mut().enumerate() {
                    let feats = &self.slot_map[b * self.bin_size..(b + 1) * self.bin_size];
                    for (v, &f) in bin.iter_mut().zip(feats) {
                        let x = values[f as usize];
                        *v = if x != 0.0 { x } else { f32::NEG_INFINITY };
                    }
                    let (slot, max) = bin_argmax(bin, lanes).expect("bin_size > 0");
                    if max > f32::NEG_INFINITY {
                        *winner = slot as u32;
                    }
                }
            }
            LshInput::Sparse { .. } => {
                // Scatter each non-zero into the bins it is mapped to.
                let best = &mut scratch.values;
                best.clear();
                best.resize(bins, f32::NEG_INFINITY);
                x.for_each_nonzero(|i, v| {
                    for (b, slot) in self.feature_slots(i) {
                        let slot = slot as u32;
                        if v > best[b] || (v == best[b] && slot < slots[b]) {
                            best[b] = v;
                            slots[b] = slot;
                        }
                    }
                });
            }
        }
        self.finish(slots, out);
    }

    fn finish(&self, slots: &[u32], out: &mut [u32]) {
        let k = self.k;
        for (t, code) in out.iter_mut().enumerate() {
            let table = &slots[t * k..(t + 1) * k];
            let mut packed = 0u32;
            for b in 0..k {
                let mut winner = table[b];
                if winner == EMPTY {
                    winner = 0;
                    for a in 1..=self.cap as u64 {
                        let probe = ((b as u64 + a * DENSIFY_STRIDE) % k as u64) as usize;
                        if table[probe] != EMPTY {
                            winner = table[probe];
                            break;
                        }
                    }
                }
                packed = (packed << self.log_bin) | winner;
            }
            *code = fold_code(packed, k as u32);
        }
    }
}
