//! `slide train|eval|bench`. Exit codes: 0 success, 1 training or
//! evaluation failure, 2 unreadable files or invalid configuration.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use slide_core::sparse_data::{parse_libsvm_multilabel, ParseOptions};
use slide_core::{DatasetHeader, Network, QuantMode, SparseBatch};

use crate::bench::{self, Ablation};
use crate::checkpoint;
use crate::config::{Overrides, TrainConfig};
use crate::synth::{self, SynthSpec};
use crate::trainer::{evaluate_p_at_1, metrics_csv, TrainOptions, Trainer};

/// Examples in the generated train and test sets when no data path is set.
pub const SYNTH_TRAIN: usize = 2000;
pub const SYNTH_TEST: usize = 500;
pub const BENCH_REPEATS: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "slide", about = "Sparse hash-selected network training on CPUs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train, write per-epoch metrics and the final checkpoint.
    Train(CommonArgs),
    /// Load the checkpoint and report P@1 on the test set.
    Eval(CommonArgs),
    /// Time matched configurations and print a CSV.
    Bench {
        ablation: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_lanes: bool,
    #[arg(long, value_parser = parse_mode)]
    pub bf16: Option<QuantMode>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<QuantMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            threads: self.threads,
            seed: self.seed,
            no_lanes: self.no_lanes,
            bf16: self.bf16,
            metrics: self.metrics.clone(),
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Train(a) => run_train(&a),
        Command::Eval(a) => run_eval(&a),
        Command::Bench { ablation, common } => {
            let ablation: Ablation = ablation.parse().map_err(usage)?;
            run_bench(&common, ablation)
        }
    }
}

pub fn load_config(args: &CommonArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p).map_err(usage)?,
        None => TrainConfig::desk(),
    };
    args.overrides().apply(&mut cfg).map_err(usage)?;
    Ok(cfg)
}

fn read_file(path: &Path, cfg: &TrainConfig) -> Result<SparseBatch, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    // Without a header line every line is an example.
    let header = match (cfg.input_dim, cfg.label_dim) {
        (Some(d), Some(c)) => Some(DatasetHeader::new(text.lines().count(), d, c)),
        _ => None,
    };
    parse_libsvm_multilabel(&text, header, ParseOptions { one_based: cfg.one_based })
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Train and test sets from the configured files, or the synthetic desk
/// task (seeded by `seed`) when no train path is set.
pub fn load_data(cfg: &TrainConfig) -> Result<(SparseBatch, Option<SparseBatch>), Failure> {
    match &cfg.train_path {
        Some(p) => {
            let train = read_file(p, cfg)?;
            let test = cfg.test_path.as_deref().map(|p| read_file(p, cfg)).transpose()?;
            Ok((train, test))
        }
        None => {
            let train = synth::generate(&SynthSpec::desk(SYNTH_TRAIN, cfg.seed), 0).map_err(runtime)?;
            let test = synth::generate(&SynthSpec::desk(SYNTH_TEST, cfg.seed), 1).map_err(runtime)?;
            Ok((train, Some(test)))
        }
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn run_train(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let (train, test) = load_data(&cfg)?;
    let spec = cfg
        .network_spec(train.header().input_dim, train.header().label_dim)
        .map_err(usage)?;
    let net = Network::new(&spec).map_err(runtime)?;
    let mut trainer = Trainer::new(net, TrainOptions::from_config(&cfg)).map_err(runtime)?;
    let mut rows = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let m = trainer.train_epoch(&train, test.as_ref()).map_err(runtime)?;
        info!(
            "epoch {}: loss {:.4} p@1 {:.4} active {:.4} wall {:.2}s",
            m.epoch, m.loss, m.p_at_1, m.active_frac, m.wall_seconds
        );
        rows.push(m);
    }
    let csv = metrics_csv(&rows);
    match &cfg.metrics_path {
        Some(p) => write_out(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &cfg.checkpoint_path {
        checkpoint::save(trainer.network(), p).map_err(runtime)?;
    }
    Ok(())
}

pub fn run_eval(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let path = cfg
        .checkpoint_path
        .as_deref()
        .ok_or_else(|| usage("eval needs checkpoint_path in the config"))?;
    let (train, test) = load_data(&cfg)?;
    let data = test.as_ref().unwrap_or(&train);
    let spec = cfg
        .network_spec(data.header().input_dim, data.header().label_dim)
        .map_err(usage)?;
    if !path.exists() {
        return Err(usage(format!("checkpoint {} not found", path.display())));
    }
    let net = checkpoint::load(&spec, path).map_err(runtime)?;
    let p1 = evaluate_p_at_1(&net, data, cfg.threads).map_err(runtime)?;
    println!("p_at_1,{p1:.6}");
    Ok(())
}

pub fn run_bench(args: &CommonArgs, ablation: Ablation) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let (train, _) = load_data(&cfg)?;
    let rows = bench::run(ablation, &cfg, &train, BENCH_REPEATS).map_err(runtime)?;
    let csv = bench::csv(&rows);
    match &cfg.metrics_path {
        Some(p) => write_out(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
