use alloc::vec;
use alloc::vec::Vec;

use super::{HashFamilyParams, HashFunction, HashScratch, LshError, LshInput};
use crate::kernels::LaneConfig;

const ABSENT: u32 = u32::MAX;

/// `L` hash tables of `2^K` buckets over neuron ids `0..num_neurons`.
///
/// Buckets are kept sorted, so the table contents are a canonical function
/// of which neuron sits in which bucket, independent of insertion order.
/// Each neuron's last inserted codes are remembered, which makes deletes
/// and code-change checks cheap.
#[derive(Debug, Clone)]
pub struct LshTables {
    hash: HashFunction,
    num_neurons: usize,
    buckets: Vec<Vec<u32>>,
    /// `codes[n * L + t]`, or `ABSENT` in slot 0 when `n` is not inserted.
    codes: Vec<u32>,
    len: usize,
}

/// Per-thread query buffers: codes plus a generation-stamped visited set.
#[derive(Debug, Clone, Default)]
pub struct QueryScratch {
    hash: HashScratch,
    codes: Vec<u32>,
    stamps: Vec<u32>,
    generation: u32,
}

impl QueryScratch {
    fn begin(&mut self, num_neurons: usize, num_tables: usize) {
        self.codes.resize(num_tables, 0);
        if self.stamps.len() < num_neurons {
            self.stamps.resize(num_neurons, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }
}

impl PartialEq for LshTables {
    fn eq(&self, other: &Self) -> bool {
        self.hash.params() == other.hash.params()
            && self.num_neurons == other.num_neurons
            && self.buckets == other.buckets
            && self.codes == other.codes
    }
}

impl LshTables {
    pub fn new(params: HashFamilyParams, num_neurons: usize) -> Result<Self, LshError> {
        Self::with_lanes(params, num_neurons, LaneConfig::default())
    }

    pub fn with_lanes(
        params: HashFamilyParams,
        num_neurons: usize,
        lanes: LaneConfig,
    ) -> Result<Self, LshError> {
        let hash = HashFunction::new(params, lanes)?;
        let l = params.l as usize;
        Ok(Self {
            buckets: vec![Vec::new(); l * params.num_buckets()],
            codes: vec![ABSENT; num_neurons * l],
            hash,
            num_neurons,
            len: 0,
        })
    }

    pub fn params(&self) -> &HashFamilyParams {
        self.hash.params()
    }

    pub fn hash_function(&self) -> &HashFunction {
        &self.hash
    }

    pub fn set_lanes(&mut self, lanes: LaneConfig) {
        self.hash.set_lanes(lanes);
    }

    pub fn num_tables(&self) -> usize {
        self.hash.num_tables()
    }

    pub fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    /// Number of neurons currently inserted.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bucket(&self, table: usize, code: u32) -> &[u32] {
        &self.buckets[table * self.params().num_buckets() + code as usize]
    }

    /// Sum of bucket sizes of one table.
    pub fn table_population(&self, table: usize) -> usize {
        let nb = self.params().num_buckets();
        self.buckets[table * nb..(table + 1) * nb]
            .iter()
            .map(Vec::len)
            .sum()
    }

    pub fn contains(&self, neuron: u32) -> bool {
        self.stored_codes(neuron).is_some()
    }

    /// Codes the neuron was last inserted under.
    pub fn stored_codes(&self, neuron: u32) -> Option<&[u32]> {
        let l = self.num_tables();
        let n = neuron as usize;
        if n >= self.num_neurons || self.codes[n * l] == ABSENT {
            return None;
        }
        Some(&self.codes[n * l..(n + 1) * l])
    }

    pub fn codes(&self, x: LshInput<'_>) -> Result<Vec<u32>, LshError> {
        self.hash.codes(x)
    }

    fn check_neuron(&self, neuron: u32) -> Result<(), LshError> {
        if neuron as usize >= self.num_neurons {
            return Err(LshError::NeuronOutOfRange(neuron));
        }
        Ok(())
    }

    /// Insert under precomputed codes.
    pub fn insert_codes(&mut self, neuron: u32, codes: &[u32]) -> Result<(), LshError> {
        self.check_neuron(neuron)?;
        if self.contains(neuron) {
            return Err(LshError::AlreadyPresent(neuron));
        }
        let (l, nb) = (self.num_tables(), self.params().num_buckets());
        assert_eq!(codes.len(), l);
        for (t, &c) in codes.iter().enumerate() {
            let bucket = &mut self.buckets[t * nb + c as usize];
            let at = bucket.binary_search(&neuron).unwrap_err();
            bucket.insert(at, neuron);
        }
        let n = neuron as usize;
        self.codes[n * l..(n + 1) * l].copy_from_slice(codes);
        self.len += 1;
        Ok(())
    }

    pub fn insert(&mut self, neuron: u32, weights: LshInput<'_>) -> Result<(), LshError> {
        self.check_neuron(neuron)?;
        if self.contains(neuron) {
            return Err(LshError::AlreadyPresent(neuron));
        }
        let codes = self.hash.codes(weights)?;
        self.insert_codes(neuron, &codes)
    }

    /// Remove `neuron` from the buckets `codes` point at. Nothing is changed
    /// unless the neuron is found in every one of them.
    pub fn delete_codes(&mut self, neuron: u32, codes: &[u32]) -> Result<(), LshError> {
        self.check_neuron(neuron)?;
        let (l, nb) = (self.num_tables(), self.params().num_buckets());
        assert_eq!(codes.len(), l);
        let mut positions = Vec::with_capacity(l);
        for (t, &c) in codes.iter().enumerate() {
            match self.buckets[t * nb + c as usize].binary_search(&neuron) {
                Ok(at) => positions.push(at),
                Err(_) => {
                    return Err(LshError::NotFound {
                        neuron,
                        table: t,
                        bucket: c,
                    })
                }
            }
        }
        for (t, (&c, at)) in codes.iter().zip(positions).enumerate() {
            self.buckets[t * nb + c as usize].remove(at);
        }
        let n = neuron as usize;
        self.codes[n * l..(n + 1) * l].fill(ABSENT);
        self.len -= 1;
        Ok(())
    }

    /// Delete using the vector the neuron was inserted with. A vector that
    /// hashes elsewhere yields [`LshError::NotFound`].
    pub fn delete(&mut self, neuron: u32, old_weights: LshInput<'_>) -> Result<(), LshError> {
        let codes = self.hash.codes(old_weights)?;
        self.delete_codes(neuron, &codes)
    }

    /// Delete using the remembered codes.
    pub fn delete_stored(&mut self, neuron: u32) -> Result<(), LshError> {
        let codes = match self.stored_codes(neuron) {
            Some(c) => c.to_vec(),
            None => {
                self.check_neuron(neuron)?;
                return Err(LshError::NotFound {
                    neuron,
                    table: 0,
                    bucket: 0,
                });
            }
        };
        self.delete_codes(neuron, &codes)
    }

    /// Re-bucket `neuron` if its codes under `weights` differ from the
    /// stored ones (inserting it if absent). Returns whether anything moved.
    pub fn update(
        &mut self,
        neuron: u32,
        weights: LshInput<'_>,
        scratch: &mut QueryScratch,
    ) -> Result<bool, LshError> {
        self.check_neuron(neuron)?;
        let l = self.num_tables();
        scratch.codes.resize(l, 0);
        self.hash
            .codes_into(weights, &mut scratch.hash, &mut scratch.codes)?;
        match self.stored_codes(neuron) {
            Some(old) if old == scratch.codes.as_slice() => Ok(false),
            Some(_) => {
                self.delete_stored(neuron)?;
                self.insert_codes(neuron, &scratch.codes)?;
                Ok(true)
            }
            None => {
                self.insert_codes(neuron, &scratch.codes)?;
                Ok(true)
            }
        }
    }

    /// Union of the buckets `x` hashes to, deduplicated, appended to `out`
    /// in table order.
    pub fn query_into(
        &self,
        x: LshInput<'_>,
        scratch: &mut QueryScratch,
        out: &mut Vec<u32>,
    ) -> Result<(), LshError> {
        let (l, nb) = (self.num_tables(), self.params().num_buckets());
        scratch.begin(self.num_neurons, l);
        self.hash
            .codes_into(x, &mut scratch.hash, &mut scratch.codes)?;
        let gen = scratch.generation;
        for t in 0..l {
            for &n in &self.buckets[t * nb + scratch.codes[t] as usize] {
                let stamp = &mut scratch.stamps[n as usize];
                if *stamp != gen {
                    *stamp = gen;
                    out.push(n);
                }
            }
        }
        Ok(())
    }

    pub fn query(&self, x: LshInput<'_>) -> Result<Vec<u32>, LshError> {
        let mut out = Vec::new();
        self.query_into(x, &mut QueryScratch::default(), &mut out)?;
        Ok(out)
    }

    pub fn clear(&mut self) {
        self.buckets.iter_mut().for_each(Vec::clear);
        self.codes.fill(ABSENT);
        self.len = 0;
    }

    /// Empty the tables and insert neuron `i` with the `i`-th vector.
    pub fn rebuild<I, V>(&mut self, vectors: I) -> Result<(), LshError>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f32]>,
    {
        self.clear();
        let mut scratch = HashScratch::default();
        let mut codes = vec![0u32; self.num_tables()];
        for (i, v) in vectors.into_iter().enumerate() {
            self.hash
                .codes_into(LshInput::Dense(v.as_ref()), &mut scratch, &mut codes)?;
            self.insert_codes(i as u32, &codes)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::HashFamily;

    fn vectors(n: usize, d: usize) -> Vec<Vec<f32>> {
        (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| (((i * 31 + j * 17) % 23) as f32 - 11.0) / 7.0)
                    .collect()
            })
            .collect()
    }

    fn params(family: HashFamily) -> HashFamilyParams {
        match family {
            HashFamily::Dwta => HashFamilyParams::dwta(3, 4, 12, 5),
            HashFamily::SimHash => HashFamilyParams::simhash(3, 4, 12, 5),
        }
    }

    #[test]
    fn empty_tables_query_empty() {
        let t = LshTables::new(params(HashFamily::Dwta), 10).unwrap();
        assert!(t.query(LshInput::Dense(&[1.0; 12])).unwrap().is_empty());
    }

    #[test]
    fn insert_query_delete() {
        for family in [HashFamily::Dwta, HashFamily::SimHash] {
            let vs = vectors(20, 12);
            let mut t = LshTables::new(params(family), 20).unwrap();
            let before = t.clone();
            t.insert(4, LshInput::Dense(&vs[4])).unwrap();
            assert!(t.query(LshInput::Dense(&vs[4])).unwrap().contains(&4));
            assert_eq!(
                t.insert(4, LshInput::Dense(&vs[4])),
                Err(LshError::AlreadyPresent(4))
            );
            t.delete(4, LshInput::Dense(&vs[4])).unwrap();
            assert_eq!(t, before);
            assert!(matches!(
                t.delete(5, LshInput::Dense(&vs[5])),
                Err(LshError::NotFound { neuron: 5, .. })
            ));
            assert!(matches!(t.delete_stored(5), Err(LshError::NotFound { neuron: 5, .. })));
            assert_eq!(t.insert(20, LshInput::Dense(&vs[0])), Err(LshError::NeuronOutOfRange(20)));
        }
    }

    #[test]
    fn conservation_and_rebuild() {
        let vs = vectors(100, 12);
        let mut t = LshTables::new(params(HashFamily::SimHash), 100).unwrap();
        for (i, v) in vs.iter().enumerate() {
            t.insert(i as u32, LshInput::Dense(v)).unwrap();
        }
        for table in 0..t.num_tables() {
            assert_eq!(t.table_population(table), 100);
        }
        let mut r = t.clone();
        r.rebuild(&vs).unwrap();
        assert_eq!(r, t);
        let once = r.clone();
        r.rebuild(&vs).unwrap();
        assert_eq!(r, once);
    }

    #[test]
    fn update_moves_only_on_code_change() {
        let vs = vectors(3, 12);
        let mut t = LshTables::new(params(HashFamily::SimHash), 3).unwrap();
        let mut scratch = QueryScratch::default();
        assert!(t.update(0, LshInput::Dense(&vs[0]), &mut scratch).unwrap());
        assert!(!t.update(0, LshInput::Dense(&vs[0]), &mut scratch).unwrap());
        let flipped: Vec<f32> = vs[0].iter().map(|v| -v).collect();
        assert!(t.update(0, LshInput::Dense(&flipped), &mut scratch).unwrap());
        let mut fresh = LshTables::new(params(HashFamily::SimHash), 3).unwrap();
        fresh.insert(0, LshInput::Dense(&flipped)).unwrap();
        assert_eq!(t, fresh);
    }
}
