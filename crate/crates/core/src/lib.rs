//! Sparse, hash-selected training primitives for very wide layers.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. Everything here is pure computation over caller-provided
//! buffers: dataset parsing into a coalesced batch layout, LSH tables for
//! active-neuron selection, lane-parallel kernels, BF16 conversion, layers
//! and networks with sparse forward/backward passes, and lazy ADAM.
//!
//! Threads, wall-clock timing and file IO live in `slide-engine`.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod kernels;
pub mod lsh;
pub mod nn;
pub mod optimizer;
pub mod param;
pub mod quant;
pub mod rng;
pub mod sparse_data;

pub use kernels::{KernelError, LaneConfig, MatrixRef, StorageOrder};
pub use lsh::{HashFamily, HashFamilyParams, LshError, LshInput, LshTables};
pub use nn::{
    Activation, ActiveSet, LayerConfig, LayerInput, LayerWeights, Network, NnError, SparsityConfig,
};
pub use optimizer::{AdamHyper, AdamState, GradBlock};
pub use param::ParamBuffer;
pub use quant::{Bf16, QuantMode, Rounding, StoragePolicy};
pub use sparse_data::{
    DataError, DatasetHeader, Example, Examples, FragmentedBatch, SparseBatch, SparseBatchView,
};
