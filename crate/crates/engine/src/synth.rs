//! Seeded label-clustered synthetic data.
//!
//! Each label owns a random prototype set of features. An example draws one
//! or two labels and takes a random part of each label's prototype (strong
//! values) plus a few noise features (weak values).

use rand::seq::SliceRandom;
use rand::Rng;
use slide_core::sparse_data::BatchBuilder;
use slide_core::{rng, DataError, SparseBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub num_examples: usize,
    pub input_dim: usize,
    pub label_dim: usize,
    pub prototype_size: usize,
    pub prototype_keep: usize,
    pub noise_features: usize,
    /// Probability of a second label.
    pub two_label_prob: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// The desk-scale task: 1,000 features, 500 labels.
    pub fn desk(num_examples: usize, seed: u64) -> Self {
        Self {
            num_examples,
            input_dim: 1000,
            label_dim: 500,
            prototype_size: 10,
            prototype_keep: 6,
            noise_features: 4,
            two_label_prob: 0.2,
            seed,
        }
    }
}

/// Prototype feature sets, one per label; these depend only on `seed`, so
/// train and test sets generated with the same seed share them.
fn prototypes(spec: &SynthSpec) -> Vec<Vec<u32>> {
    let mut rng = rng::stream(spec.seed, &[0x5947, 0]);
    let mut all: Vec<u32> = (0..spec.input_dim as u32).collect();
    (0..spec.label_dim)
        .map(|_| {
            let (head, _) = all.partial_shuffle(&mut rng, spec.prototype_size);
            head.to_vec()
        })
        .collect()
}

/// Generate examples for `split` (e.g. 0 = train, 1 = test) of the task
/// defined by `spec.seed`.
pub fn generate(spec: &SynthSpec, split: u64) -> Result<SparseBatch, DataError> {
    let protos = prototypes(spec);
    let mut rng = rng::stream(spec.seed, &[0x5947, 1 + split]);
    let mut b = BatchBuilder::new(spec.input_dim, spec.label_dim);
    let mut features: Vec<(u32, f32)> = Vec::new();
    for i in 0..spec.num_examples {
        features.clear();
        let mut labels = vec![rng.gen_range(0..spec.label_dim as u32)];
        if rng.gen_bool(spec.two_label_prob) {
            let other = rng.gen_range(0..spec.label_dim as u32);
            if other != labels[0] {
                labels.push(other);
            }
        }
        for &l in &labels {
            let proto = &protos[l as usize];
            for &f in proto.choose_multiple(&mut rng, spec.prototype_keep) {
                features.push((f, rng.gen_range(0.5..1.0)));
            }
        }
        for _ in 0..spec.noise_features {
            features.push((rng.gen_range(0..spec.input_dim as u32), rng.gen_range(0.0..0.3)));
        }
        features.sort_by_key(|&(f, _)| f);
        features.dedup_by_key(|&mut (f, _)| f);
        b.push(&features, &labels, i + 1)?;
    }
    b.finish()
}
