//! Threads, files and timing around `slide-core`: configuration, the
//! epoch loop, checkpoints, ablation benches and the `slide` command line.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod synth;
pub mod trainer;

pub use config::{ConfigError, Overrides, TrainConfig};
pub use trainer::{evaluate_p_at_1, EpochMetrics, TrainError, TrainOptions, Trainer};
